import hashlib
import json
import logging
import sqlite3
from typing import Any, Dict, List, Optional

from larclab.utils.serialization import dumps

logger = logging.getLogger(__name__)


class ResultStore:
    """Manages a SQLite database of laboratory run records."""

    def __init__(self, db_path: str):
        self.db_path = db_path
        self._init_database()

    def _init_database(self):
        """Initialize the database with required tables."""
        with sqlite3.connect(self.db_path) as conn:
            conn.execute('''
                CREATE TABLE IF NOT EXISTS runs (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    content_hash TEXT UNIQUE NOT NULL,
                    command TEXT NOT NULL,       -- CLI subcommand
                    parameters TEXT NOT NULL,    -- JSON string
                    result TEXT NOT NULL,        -- JSON string
                    verdict TEXT,
                    seed INTEGER,
                    exit_code INTEGER DEFAULT 0,
                    created_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP,
                    updated_at TIMESTAMP DEFAULT CURRENT_TIMESTAMP
                )
            ''')
            conn.execute('''
                CREATE TABLE IF NOT EXISTS tags (
                    id INTEGER PRIMARY KEY AUTOINCREMENT,
                    run_id INTEGER NOT NULL,
                    tag TEXT NOT NULL,
                    FOREIGN KEY (run_id) REFERENCES runs (id) ON DELETE CASCADE
                )
            ''')
            conn.execute('CREATE INDEX IF NOT EXISTS idx_content_hash ON runs(content_hash)')
            conn.execute('CREATE INDEX IF NOT EXISTS idx_command ON runs(command)')
            conn.execute('CREATE INDEX IF NOT EXISTS idx_verdict ON runs(verdict)')

    @staticmethod
    def _content_hash(command: str, parameters: Dict[str, Any]) -> str:
        """Hash of the command together with its canonical parameter JSON."""
        return hashlib.sha256(f"{command}:{dumps(parameters)}".encode()).hexdigest()

    def save_run(self,
                 command: str,
                 parameters: Dict[str, Any],
                 result: Any,
                 verdict: Optional[str] = None,
                 seed: Optional[int] = None,
                 exit_code: int = 0,
                 tags: Optional[List[str]] = None) -> int:
        """Save a run; a rerun with identical parameters replaces the stored result."""
        content_hash = self._content_hash(command, parameters)
        with sqlite3.connect(self.db_path) as conn:
            existing = conn.execute('SELECT id FROM runs WHERE content_hash = ?', (content_hash,)).fetchone()
            if existing:
                run_id = existing[0]
                conn.execute('''
                    UPDATE runs
                    SET result = ?, verdict = ?, exit_code = ?, updated_at = CURRENT_TIMESTAMP
                    WHERE id = ?
                ''', (dumps(result), verdict, exit_code, run_id))
            else:
                cursor = conn.execute('''
                    INSERT INTO runs (content_hash, command, parameters, result, verdict, seed, exit_code)
                    VALUES (?, ?, ?, ?, ?, ?, ?)
                ''', (content_hash, command, dumps(parameters), dumps(result), verdict, seed, exit_code))
                run_id = cursor.lastrowid

            if tags:
                conn.execute('DELETE FROM tags WHERE run_id = ?', (run_id,))
                for tag in tags:
                    conn.execute('INSERT INTO tags (run_id, tag) VALUES (?, ?)', (run_id, tag.strip().lower()))
            conn.commit()
        logger.debug(f"Recorded {command} run {run_id}")
        return run_id

    @staticmethod
    def _decode(row: sqlite3.Row) -> Dict[str, Any]:
        record = dict(row)
        record['parameters'] = json.loads(record['parameters'])
        record['result'] = json.loads(record['result'])
        record['tags'] = record['tags_list'].split(',') if record['tags_list'] else []
        del record['tags_list']
        return record

    def _fetch_one(self, where: str, params: tuple) -> Optional[Dict[str, Any]]:
        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            row = conn.execute(f'''
                SELECT runs.*, GROUP_CONCAT(tags.tag) as tags_list
                FROM runs
                LEFT JOIN tags ON runs.id = tags.run_id
                WHERE {where}
                GROUP BY runs.id
            ''', params).fetchone()
            return self._decode(row) if row else None

    def get_run(self, command: str, parameters: Dict[str, Any]) -> Optional[Dict[str, Any]]:
        """The stored run with exactly these parameters, if any."""
        return self._fetch_one('content_hash = ?', (self._content_hash(command, parameters),))

    def get_run_by_id(self, run_id: int) -> Optional[Dict[str, Any]]:
        return self._fetch_one('runs.id = ?', (run_id,))

    def search_runs(self,
                    command: Optional[str] = None,
                    verdict: Optional[str] = None,
                    tag: Optional[str] = None,
                    limit: int = 50,
                    offset: int = 0) -> List[Dict[str, Any]]:
        """Search runs with optional filters, newest first."""
        conditions = []
        params: List[Any] = []
        if command:
            conditions.append('command = ?')
            params.append(command)
        if verdict:
            conditions.append('verdict = ?')
            params.append(verdict)
        if tag:
            conditions.append('runs.id IN (SELECT run_id FROM tags WHERE tag = ?)')
            params.append(tag.strip().lower())
        where_clause = 'WHERE ' + ' AND '.join(conditions) if conditions else ''

        with sqlite3.connect(self.db_path) as conn:
            conn.row_factory = sqlite3.Row
            cursor = conn.execute(f'''
                SELECT runs.*, GROUP_CONCAT(tags.tag) as tags_list
                FROM runs
                LEFT JOIN tags ON runs.id = tags.run_id
                {where_clause}
                GROUP BY runs.id
                ORDER BY runs.id DESC
                LIMIT ? OFFSET ?
            ''', params + [limit, offset])
            return [self._decode(row) for row in cursor.fetchall()]

    def delete_run(self, run_id: int) -> bool:
        """Delete a run and its tags; False when there was no such run."""
        with sqlite3.connect(self.db_path) as conn:
            conn.execute('DELETE FROM tags WHERE run_id = ?', (run_id,))
            deleted = conn.execute('DELETE FROM runs WHERE id = ?', (run_id,)).rowcount
            conn.commit()
        return deleted > 0

    def get_statistics(self) -> Dict[str, Any]:
        """Run counts overall, per command and per verdict."""
        with sqlite3.connect(self.db_path) as conn:
            total = conn.execute('SELECT COUNT(*) FROM runs').fetchone()[0]
            by_command = dict(conn.execute('SELECT command, COUNT(*) FROM runs GROUP BY command').fetchall())
            by_verdict = dict(conn.execute(
                "SELECT COALESCE(verdict, 'none'), COUNT(*) FROM runs GROUP BY verdict").fetchall())
        return {'total_runs': total, 'by_command': by_command, 'by_verdict': by_verdict}
