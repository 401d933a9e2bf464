from setuptools import setup

setup(
    name="fairmislead",
    version="0.1.0",
    packages=[
        "fairmislead",
        "fairmislead.data",
        "fairmislead.lib",
        "fairmislead.library",
        "fairmislead.metrics",
        "fairmislead.nets",
        "fairmislead.perturb",
        "fairmislead.srm",
        "fairmislead.synth",
        "fairmislead.trainer",
    ],
    url="https://github.com/fairmislead/fairmislead",
    license="AGPLv3+",
    author="The fairmislead contributors",
    package_data={
        "fairmislead": [
            "data/report.schema.json",
            "templates/summary.html",
            "config/config.sample.yml",
            "config/experiment.yml",
        ]
    },
    description="Fair deepfake detection by misleading learning",
    include_package_data=True,
    install_requires=[
        "numpy",
        "scipy",
        "torch",
        "Pillow",
        "matplotlib",
        "pyyaml",
        "jinja2",
        "jsonschema",
        "colorama",
        "progressbar2",
    ],
    extras_require={"test": ["pytest", "scikit-learn"]},
    entry_points={
        "console_scripts": [
            "fairmislead = fairmislead.__main__:main",
        ]
    },  # noqa: E501
    classifiers=[
        "Operating System :: OS Independent",
        "Programming Language :: Python :: 3.8",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Operating System :: POSIX",
    ],
)
