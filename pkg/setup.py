from pathlib import Path

from setuptools import find_packages, setup

ROOT = Path(__file__).resolve().parent
README = ROOT / "readme.md"

setup(
    name="keff-lowrank",
    version="0.1.0",
    description="k-eigenvalue solver for multigroup neutron diffusion with low-rank power iteration",
    long_description=README.read_text(encoding="utf-8") if README.exists() else "",
    long_description_content_type="text/markdown",
    packages=find_packages(include=["core", "core.*"]),
    py_modules=["run_cli"],
    data_files=[("", ["config.json", "materials.json"])],
    classifiers=[
        "Programming Language :: Python :: 3",
        "License :: OSI Approved :: MIT License",
        "Topic :: Scientific/Engineering :: Physics",
    ],
    python_requires=">=3.9",
    install_requires=[
        "numpy>=1.22",
        "scipy>=1.8",
        "pyfiglet>=1.0.2",
        "termcolor>=2.3.0",
    ],
    entry_points={"console_scripts": ["keff-lowrank=run_cli:main"]},
)
