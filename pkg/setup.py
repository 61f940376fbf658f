"""A setuptools based setup module.

See:
https://packaging.python.org/guides/distributing-packages-using-setuptools/
https://github.com/pypa/sampleproject
"""
from setuptools import setup, find_packages
import pathlib

here = pathlib.Path(__file__).parent.resolve()

# Get the long description from the README file
long_description = (here / 'README.rst').read_text(encoding='utf-8')

setup(
    # $ pip install flakecat
    name='flakecat',  # Required

    # Versions should comply with PEP 440:
    # https://www.python.org/dev/peps/pep-0440/
    # Keep in sync with flakecat/__init__.py
    version='0.1.0',  # Required

    description='Categorisation of flaky Java tests from their source code',  # Optional

    long_description=long_description,  # Optional
    long_description_content_type='text/x-rst',  # Optional

    classifiers=[  # Optional
        'Development Status :: 3 - Alpha',

        'Intended Audience :: Science/Research',
        'Intended Audience :: Developers',
        'Topic :: Scientific/Engineering :: Artificial Intelligence',
        'Topic :: Software Development :: Testing',

        'License :: OSI Approved :: Apache Software License',

        'Programming Language :: Python ',
        'Programming Language :: Python :: 3 :: Only',
    ],

    keywords='flaky tests, test categorisation, SMOTE, t-SNE, Bayesian optimisation',  # Optional

    packages=find_packages(),  # Required

    # dataclasses, f-strings and sklearn >= 1.1 (log_loss criterion)
    python_requires='>=3.8, <4',

    install_requires=['numpy', 'scipy', 'scikit-learn>=1.1', 'pandas',
                      'joblib', 'prettytable', 'seaborn', 'matplotlib'],  # Optional

    extras_require={  # Optional
        'test': ['pytest'],
    },

    entry_points={  # Optional
        'console_scripts': [
            'flakecat=flakecat.cli:main',
        ],
    },
)
