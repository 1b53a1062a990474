#!/usr/bin/env python3
"""
Setup script for MetaNulling - Few-Shot Meta-Learning with Linear Nulling
"""

import re
import sys
from pathlib import Path
from setuptools import setup, find_packages

ROOT = Path(__file__).parent

if sys.version_info < (3, 9):
    print("Error: MetaNulling requires Python 3.9 or higher")
    print(f"You are using Python {sys.version_info.major}.{sys.version_info.minor}")
    sys.exit(1)


def read_metadata():
    """__version__ and __author__ from core/__init__.py, without importing numpy."""
    text = (ROOT / "core" / "__init__.py").read_text(encoding='utf-8')
    fields = dict(re.findall(r'^__(version|author)__ = "([^"]+)"', text, re.MULTILINE))
    return fields.get('version', '0.0.0'), fields.get('author', 'MetaNulling Team')


def read_requirements():
    """Split requirements.txt into runtime pins, dev tooling and optional packages.

    Optional packages are the commented-out pins (``# torch>=2.0.0``).
    """
    runtime, dev, optional = [], [], {}
    req_path = ROOT / "requirements.txt"
    if not req_path.exists():
        return ['numpy>=1.24.0', 'scipy>=1.11.0', 'tqdm>=4.65.0',
                'colorama>=0.4.6', 'pathvalidate>=3.0.0'], dev, optional

    for raw in req_path.read_text(encoding='utf-8').splitlines():
        commented = raw.lstrip().startswith('#')
        line = raw.lstrip('# ').split('#', 1)[0].strip()
        if not re.match(r'^[A-Za-z][\w.-]*\s*[<>=!~]', line):
            continue
        name = re.split(r'[<>=!~]', line, maxsplit=1)[0].strip().lower()
        if commented:
            optional[name] = line
        elif name.startswith('pytest'):
            dev.append(line)
        else:
            runtime.append(line)
    return runtime, dev, optional


VERSION, AUTHOR = read_metadata()
RUNTIME, DEV, OPTIONAL = read_requirements()

EXTRAS = {
    'dev': DEV,
    'oracle': [OPTIONAL['torch']] if 'torch' in OPTIONAL else [],
    'system': [OPTIONAL['psutil']] if 'psutil' in OPTIONAL else [],
}
EXTRAS['all'] = sorted(set(EXTRAS['oracle'] + EXTRAS['system']))

CLASSIFIERS = [
    "Development Status :: 4 - Beta",
    "Intended Audience :: Science/Research",
    "License :: OSI Approved :: MIT License",
    "Operating System :: OS Independent",
    "Programming Language :: Python :: 3",
    "Programming Language :: Python :: 3.9",
    "Programming Language :: Python :: 3.10",
    "Programming Language :: Python :: 3.11",
    "Programming Language :: Python :: 3.12",
    "Topic :: Scientific/Engineering :: Artificial Intelligence",
    "Topic :: Scientific/Engineering :: Mathematics",
]

readme = ROOT / "README.md"

setup(
    name="meta-nulling",
    version=VERSION,
    author=AUTHOR,
    description="Few-shot meta-learning with null-space projection of class reference vectors",
    long_description=readme.read_text(encoding='utf-8') if readme.exists() else "",
    long_description_content_type="text/markdown",

    packages=find_packages(exclude=['tests', 'tests.*', 'examples', 'examples.*']),
    py_modules=['meta_nulling'],
    include_package_data=True,
    package_data={'config': ['*.ini', '*.json']},

    python_requires=">=3.9",
    install_requires=RUNTIME,
    extras_require=EXTRAS,

    entry_points={
        'console_scripts': [
            'meta-nulling=meta_nulling:main',
            'mln=meta_nulling:main',
        ]
    },

    classifiers=CLASSIFIERS,
    keywords=["few-shot", "meta-learning", "null-space", "projection", "episodic-training"],
    license="MIT",
    platforms=["Windows", "macOS", "Linux"],
    zip_safe=False,
)
