# Copyright 2021 The Chemoflow Authors.

from setuptools import find_packages, setup

install_requires = [
    "numpy",
    "scipy",
    "dacite",
    "torch",
    "tqdm",
]

VERSION = {}  # type: ignore
with open("chemoflow/__version__.py", "r") as version_file:
    exec(version_file.read(), VERSION)


setup(
    name="chemoflow",
    description="Chemoflow: minimizing-movement solver for chemotaxis gradient flows",
    version=VERSION["version"],
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    author="The Chemoflow Authors",
    install_requires=install_requires,
    extras_require={"test": ["pytest"]},
    packages=find_packages(include=["chemoflow", "chemoflow.*"], exclude="tests"),
    entry_points={"console_scripts": ["chemoflow=chemoflow.cli:main"]},
    python_requires=">=3.8.0",
    classifiers=[
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Intended Audience :: Science/Research",
        "Topic :: Scientific/Engineering :: Mathematics",
    ],
    package_data={},
    dependency_links=[],
    include_package_data=True,
    zip_safe=False,
)
