"""
Package setup for the rough path recursion laboratory
"""
from pathlib import Path

import setuptools

setup_py_dir = Path(__file__).parent.absolute()


def req_file(filename):
    with open(setup_py_dir / filename, encoding='utf-8') as f:
        content = f.readlines()
    # drop comments and blank lines
    return [x.strip() for x in content if x.strip() and not x.lstrip().startswith('#')]


install_requires = [r for r in req_file("requirements.txt") if not r.startswith("pytest")]


setuptools.setup(
    name="roughsim",
    version="0.1.0",
    description="Rough path recursion laboratory: discrete signatures, lifts, solvers and diffusion limits",
    packages=["src", "config"],
    py_modules=["cli"],
    python_requires=">=3.9",
    install_requires=install_requires,
    extras_require={"test": ["pytest>=7.4.0"]},
    entry_points={"console_scripts": ["roughsim=cli:main"]},
)
