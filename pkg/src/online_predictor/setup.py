from setuptools import setup

package_name = "online_predictor"

setup(
    name=package_name,
    version="0.1.0",
    packages=[package_name],
    python_requires=">=3.8",
    install_requires=["numpy>=1.22.1", "scipy>=1.7.3", "pandas", "pyyaml"],
    zip_safe=True,
    description="Online least-squares observation prediction for unknown linear systems, with the Kalman filter baseline",
    license="Apache License 2.0",
    tests_require=["pytest"],
    entry_points={
        "console_scripts": [
            "online_predictor = online_predictor.cli:main",
        ],
    },
)
