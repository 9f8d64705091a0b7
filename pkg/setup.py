from setuptools import setup, find_packages

with open("requirements.txt", "r") as f:
    requirements = f.readlines()

setup(
    name="manev-kit",
    description="Ground states, self-similar blow-up and particle dynamics for the Vlasov-Manev system",
    packages=find_packages(exclude=["tests", "examples"]),
    entry_points={
        "console_scripts": [
            "manev-kit = manevkit.main:main",
        ]
    },
    include_package_data=True,
    install_requires=requirements,
    extras_require={"test": ["pytest"]},
    python_requires=">=3.8",
)
