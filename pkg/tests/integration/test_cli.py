import json
import logging
import os
from fractions import Fraction

import pytest
import yaml

from larclab.core.commlab import Rectangle
from larclab.core.database import ResultStore
from larclab.core.designs import save_family
from larclab.core.pdt import CubeDistribution
from larclab.core.settings import SettingsManager
from larclab.main import EXIT_OK, EXIT_USAGE, EXIT_VIOLATION, main
from larclab.utils.serialization import dump_json


@pytest.fixture
def run(capsys, config_dir):
    """Invoke the CLI in-process; returns (exit code, stdout text)."""
    def invoke(*args, record=False):
        argv = ['--config-dir', config_dir, '--log-level', 'WARNING']
        if not record:
            argv.append('--no-record')
        code = main(argv + [str(a) for a in args])
        return code, capsys.readouterr().out
    return invoke


@pytest.fixture
def three_plane_file(tmp_path, three_plane):
    path = str(tmp_path / 'three_plane.json')
    save_family(three_plane, path)
    return path


@pytest.fixture
def two_planes_file(tmp_path, two_planes):
    path = str(tmp_path / 'two_planes.json')
    save_family(two_planes, path)
    return path


class TestGenDesign:
    def test_output_is_byte_identical(self, run):
        args = ('gen-design', '--n', 20, '--dim', 8, '--m', 100, '--seed', 7)
        code, first = run(*args)
        assert code == EXIT_OK
        assert run(*args)[1] == first
        data = json.loads(first)
        assert data['n'] == 20 and len(data['members']) == 100
        assert data['meta'] == {'dim': 8, 'm': 100, 'seed': 7}

    def test_seed_is_required(self, run):
        assert run('gen-design', '--n', 10, '--dim', 2, '--m', 3)[0] == EXIT_USAGE

    def test_preset_is_recorded(self, run):
        code, out = run('gen-design', '--n', 5, '--preset', 'query', '--seed', 1)
        assert code == EXIT_OK
        meta = json.loads(out)['meta']
        assert meta['preset']['m'] == 500 and meta['dim'] == 2

    def test_max_n_cap(self, run):
        assert run('--max-n', 8, 'gen-design', '--n', 10, '--dim', 2, '--m', 2, '--seed', 1)[0] == EXIT_USAGE


class TestVerifyDesign:
    def test_exhaustive_certificate(self, run, three_plane_file):
        code, out = run('verify-design', '--design', three_plane_file, '--s', 1)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['h'] == 1 and data['verdict'] == 'certified' and data['is_proof']

    def test_requested_h_too_small(self, run, three_plane_file):
        code, out = run('verify-design', '--design', three_plane_file, '--s', 1, '--h', 0)
        assert code == EXIT_VIOLATION
        assert json.loads(out)['verdict'] == 'violation'

    def test_pairwise(self, run, three_plane_file, two_planes_file):
        assert run('verify-design', '--design', three_plane_file, '--mode', 'pairwise')[0] == EXIT_VIOLATION
        assert run('verify-design', '--design', two_planes_file, '--mode', 'pairwise')[0] == EXIT_OK

    def test_montecarlo_is_thread_independent(self, run, tmp_path):
        path = str(tmp_path / 'fam.json')
        code, out = run('gen-design', '--n', 12, '--dim', 4, '--m', 20, '--seed', 3)
        with open(path, 'w') as f:
            f.write(out)
        args = ('verify-design', '--design', path, '--mode', 'montecarlo', '--s', 2, '--h', 20,
                '--trials', 500, '--seed', 9)
        serial = run('--threads', 1, *args)
        threaded = run('--threads', 4, *args)
        assert serial == threaded
        assert json.loads(serial[1])['mode'] == 'montecarlo'

    def test_missing_file(self, run, tmp_path):
        assert run('verify-design', '--design', str(tmp_path / 'nope.json'), '--s', 1)[0] == EXIT_USAGE


class TestFourier:
    def test_union_identity_is_reported(self, run, two_planes_file):
        code, out = run('fourier', '--from-design', two_planes_file)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['union_identity'] is True
        assert data['representation_norm_bound'] == 3

    def test_xor_rank_and_spectrum(self, run, three_plane_file):
        code, out = run('fourier', '--from-design', three_plane_file, '--xor-rank', '--spectrum')
        data = json.loads(out)
        assert data['xor_lift_rank'] == data['sparsity']
        assert len(data['spectrum']['values']) == 8
        assert 'union_identity' not in data

    def test_bad_fraction_is_a_usage_error(self, run, three_plane_file):
        with pytest.raises(SystemExit) as info:
            run('fourier', '--from-design', three_plane_file, '--delta', 'tenth')
        assert info.value.code == EXIT_USAGE

    def test_missing_input(self, run):
        assert run('fourier')[0] == EXIT_USAGE


class TestPdtLowerBound:
    def test_below_threshold(self, run, three_plane_file):
        code, out = run('pdt-lb', '--design', three_plane_file, '--eps', '1/100', '--cmax', 1,
                        '--s', 1, '--depth', 1)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['scan']['verdict'] == 'NoWitness(1)'
        assert data['lower_bound'] == 1
        assert data['threshold']['epsilon_star'] == '1/96'
        assert data['min_distributional_error']['error'] == '1/6'

    def test_witness(self, run, three_plane_file):
        code, out = run('pdt-lb', '--design', three_plane_file, '--eps', '1/16', '--cmax', 1)
        witness = json.loads(out)['scan']['witness']
        assert code == EXIT_OK
        assert witness['one_mass'] == '1/6' and witness['total_mass'] == '2/3'


class TestConjecture:
    def test_point_mass_is_consistent(self, run, tmp_path, three_plane_file):
        dist = str(tmp_path / 'point.json')
        dump_json(CubeDistribution.point_mass(3, 0).to_json(), path=dist)
        code, out = run('conjecture', '--design', three_plane_file, '--dist', dist, '--s', 1)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['report']['verdict'] == 'consistent'
        assert data['h_source'] == 'exhaustive'
        assert data['report']['error_bound'] is None

    def test_float_probabilities_report_error_bound(self, run, tmp_path, three_plane_file):
        dist = str(tmp_path / 'float.json')
        dump_json({'n': 3, 'probabilities': [0.5, 0.5, 0, 0, 0, 0, 0, 0]}, path=dist)
        code, out = run('conjecture', '--design', three_plane_file, '--dist', dist, '--s', 1)
        report = json.loads(out)['report']
        assert code == EXIT_OK
        assert isinstance(report['error_bound'], float) and report['error_bound'] > 0

    def test_float_probabilities_must_sum_to_one(self, run, tmp_path, three_plane_file):
        dist = str(tmp_path / 'short.json')
        dump_json({'n': 3, 'probabilities': [0.5, 0.25, 0, 0, 0, 0, 0, 0]}, path=dist)
        code, _ = run('conjecture', '--design', three_plane_file, '--dist', dist, '--s', 1)
        assert code == EXIT_USAGE

    def test_candidate_exits_two(self, run, tmp_path, three_plane, three_plane_file):
        dist = str(tmp_path / 'member.json')
        X = CubeDistribution.uniform_on(3, three_plane.members[0].element_array())
        dump_json(X.to_json(), path=dist)
        code, out = run('conjecture', '--design', three_plane_file, '--dist', dist,
                        '--s', 2, '--h', 0, '--beta', 1)
        assert code == EXIT_VIOLATION
        assert json.loads(out)['report']['verdict'] == 'COUNTEREXAMPLE-CANDIDATE'

    def test_search_streams_progress(self, run, tmp_path, three_plane_file):
        trace = str(tmp_path / 'trace.jsonl')
        args = ('conjecture', '--design', three_plane_file, '--search', '--s', 1,
                '--budget', 200, '--seed', 5, '--jsonl', trace)
        code, first = run(*args)
        assert code in (EXIT_OK, EXIT_VIOLATION)
        code, summary = run('report', '--from-jsonl', trace)
        assert code == EXIT_OK
        assert json.loads(summary)['seeds'] in ([], [5])

    def test_affine_sanity(self, run):
        code, out = run('conjecture', '--affine-sanity', '--n', 8, '--s', 2, '--m', 4,
                        '--trials', 4, '--seed', 2)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['consistent'] is True
        assert data['design_violations'] == []
        assert all(i['entropy'] == 6.0 and i['design_holds'] for i in data['instances'])


class TestRect:
    def test_chain_trials(self, run):
        code, out = run('rect', '--chain-trials', 100, '--n', 4, '--seed', 1)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['violations'] == 0 and data['trials'] == 100

    def test_analysis_of_a_rectangle_file(self, run, tmp_path, three_plane_file):
        rect = str(tmp_path / 'rect.json')
        dump_json(Rectangle.from_points(3, [2], [5]).to_json(), path=rect)
        code, out = run('rect', '--design', three_plane_file, '--rect', rect, '--eps', '0', '--c', 1)
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['corruption']['witness'] is True
        assert data['corruption']['total_mass'] == str(Fraction(1, 16))
        assert len(data['chain']) == 3

    def test_mono_search_is_reproducible(self, run, three_plane_file):
        args = ('rect', '--design', three_plane_file, '--search', '--budget', 300, '--seed', 3)
        code, first = run(*args)
        assert code == EXIT_OK
        assert run(*args)[1] == first


class TestSettingsCaps:
    @staticmethod
    def write_caps(config_dir, **caps):
        os.makedirs(config_dir, exist_ok=True)
        with open(os.path.join(config_dir, 'settings.yaml'), 'w') as f:
            yaml.safe_dump({'caps': caps}, f)

    def test_enumeration_cap_from_settings(self, run, config_dir, three_plane_file):
        assert run('fourier', '--from-design', three_plane_file)[0] == EXIT_OK
        self.write_caps(config_dir, enumerate_dim=1)
        assert run('fourier', '--from-design', three_plane_file)[0] == EXIT_USAGE

    def test_tree_enumeration(self, run, config_dir, three_plane_file):
        args = ('pdt-lb', '--design', three_plane_file, '--eps', '1/100', '--cmax', 1,
                '--depth', 1, '--enumerate')
        code, out = run(*args)
        assert code == EXIT_OK
        assert json.loads(out)['min_distributional_error'] == {'depth': 1, 'error': '1/6', 'enumerated': '1/6'}
        self.write_caps(config_dir, tree_enum_n=2)
        assert run(*args)[0] == EXIT_USAGE

    def test_enumerate_needs_depth(self, run, three_plane_file):
        assert run('pdt-lb', '--design', three_plane_file, '--eps', 0, '--cmax', 1, '--enumerate')[0] == EXIT_USAGE

    def test_pair_table(self, run, config_dir, three_plane_file):
        code, out = run('rect', '--design', three_plane_file, '--nu-table')
        data = json.loads(out)
        assert code == EXIT_OK
        assert data['denominator'] == 192
        assert all(sum(row) == 24 for row in data['numerators'])
        self.write_caps(config_dir, pair_table_n=2)
        assert run('rect', '--design', three_plane_file, '--nu-table')[0] == EXIT_USAGE


class TestLedgerAndOutput:
    def test_runs_are_recorded(self, run, three_plane_file):
        run('verify-design', '--design', three_plane_file, '--s', 1, record=True)
        run('verify-design', '--design', three_plane_file, '--s', 1, record=True)
        code, out = run('report')
        stats = json.loads(out)['statistics']
        assert code == EXIT_OK
        assert stats['total_runs'] == 1
        assert stats['by_verdict'] == {'certified': 1}

    def test_tags_and_single_run(self, run, three_plane_file, two_planes_file):
        run('--tag', 'planes', 'verify-design', '--design', three_plane_file, '--s', 1, record=True)
        run('verify-design', '--design', two_planes_file, '--s', 1, record=True)
        code, out = run('report', '--tag', 'Planes')
        runs = json.loads(out)['runs']
        assert code == EXIT_OK
        assert len(runs) == 1 and runs[0]['tags'] == ['planes']
        code, out = run('report', '--run', runs[0]['id'])
        record = json.loads(out)
        assert code == EXIT_OK
        assert record['result']['h'] == 1
        assert record['parameters']['design'] == three_plane_file

    def test_delete(self, run, three_plane_file):
        run('verify-design', '--design', three_plane_file, '--s', 1, record=True)
        run_id = json.loads(run('report')[1])['runs'][0]['id']
        code, out = run('report', '--delete', run_id)
        assert code == EXIT_OK and json.loads(out) == {'deleted': run_id}
        assert json.loads(run('report')[1])['statistics']['total_runs'] == 0
        assert run('report', '--delete', run_id)[0] == EXIT_USAGE
        assert run('report', '--run', run_id)[0] == EXIT_USAGE

    def test_changed_result_is_flagged(self, run, config_dir, three_plane_file, caplog):
        run('verify-design', '--design', three_plane_file, '--s', 1, record=True)
        store = ResultStore(SettingsManager(config_dir).get_database_path())
        stored = store.search_runs()[0]
        store.save_run(stored['command'], stored['parameters'], {'h': 99}, verdict='certified')
        with caplog.at_level(logging.WARNING):
            run('verify-design', '--design', three_plane_file, '--s', 1, record=True)
        assert f"differs from recorded run {stored['id']}" in caplog.text
        assert store.get_run_by_id(stored['id'])['result']['h'] == 1

    def test_out_file(self, run, tmp_path, three_plane_file):
        target = str(tmp_path / 'cert.json')
        code, out = run('--out', target, 'verify-design', '--design', three_plane_file, '--s', 1)
        assert code == EXIT_OK and out == ''
        with open(target) as f:
            assert json.load(f)['h'] == 1

    def test_unknown_command(self, run):
        with pytest.raises(SystemExit) as info:
            run('frobnicate')
        assert info.value.code == EXIT_USAGE
