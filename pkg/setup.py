from setuptools import setup, find_packages

setup(
    name="larclab",
    version="0.3.0",
    description="larclab - exact desk-scale laboratory for union-of-subspaces Boolean functions",
    author="larclab developers",
    packages=find_packages(exclude=["tests*", "examples*"]),
    install_requires=[
        "numpy>=1.24.0",
        "pyyaml>=6.0.1",
        "sympy>=1.12",
    ],
    entry_points={
        "console_scripts": [
            "larclab=larclab.main:main",
        ],
    },
    python_requires=">=3.8",
)
