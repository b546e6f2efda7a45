from setuptools import setup, find_packages

setup(
    name="steerbench",
    version="0.1.0",
    package_dir={"": "apps/steerbench"},
    packages=find_packages(where="apps/steerbench"),
    py_modules=["app"],
    package_data={
        "steerability.textmetrics": ["resources/*.tsv"],
        "steerability.llmrun": ["resources/*.tsv"],
    },
    install_requires=[
        line.strip()
        for line in open("requirements.txt")
        if line.strip() and not line.startswith("#")
    ],
    entry_points={"console_scripts": ["steerbench=app:main"]},
    python_requires=">=3.10",
)
