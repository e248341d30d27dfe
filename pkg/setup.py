from setuptools import setup, find_packages

setup(
    name="mlmcid",
    version="1.0.0",
    author="MLMCID Team",
    description="Pointer-network multi-label multi-class intent detection: corpus synthesis, training and evaluation",
    long_description=open("README.md").read(),
    long_description_content_type="text/markdown",
    packages=find_packages(exclude=["tests", "tests.*"]),
    package_data={"utils": ["templates/*.html"]},
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
    ],
    python_requires=">=3.9",
    install_requires=[
        "torch>=2.1.0",
        "pytest>=7.4.3",
        "loguru>=0.7.2",
        "click>=8.1.7",
        "pydantic>=2.5.0",
        "pydantic-settings>=2.1.0",
        "python-dotenv>=1.0.0",
        "jinja2>=3.1.2",
        "scikit-learn>=1.3.2",
    ],
    extras_require={
        "hf": ["transformers>=4.36.0"],
    },
    entry_points={
        "console_scripts": [
            "mlmcid=cli.runner:main",
        ],
    },
)
