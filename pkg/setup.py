from setuptools import setup, find_packages

setup(
    name="ligspace",
    version="0.1.0",
    description="Shared ligand/pocket embedding space: equivariant encoders, contrastive training, exact retrieval, screening metrics and dataset-token steered SMILES generation",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="Ligspace Team",
    author_email="ligspace@example.com",
    packages=find_packages(exclude=["tests"]),
    install_requires=[
        "typer>=0.12.0",
        "numpy>=1.26",
        "PyYAML>=6.0",
    ],
    extras_require={
        "test": [
            "pytest>=8.0",
            "hypothesis>=6.100",
        ],
    },
    entry_points={
        "console_scripts": [
            "ligspace=ligspace.cli:app",
        ],
    },
    python_requires=">=3.10",
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Chemistry",
    ],
)
