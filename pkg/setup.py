#! /usr/bin/env python

from setuptools import setup, find_packages

##-------------------------------------------------
## Package setup

setup(name='pyimpflow',
      version='0.1',
      description='Iterative magnitude pruning of Hamiltonian neural networks, read as a renormalisation-group flow',
      packages=find_packages(exclude=['tests']),
      license='LGPL-3.0',
      python_requires='>=3.9',
      install_requires=[
        'numpy>=1.20',
        'scipy>=1.7',
        'astropy>=5.0',
        'pyyaml>=5.4',
        'typer>=0.9',
        'rich>=12.0'],
      extras_require={
        'test': ['pytest>=7.0', 'hypothesis>=6.0'],
        'docs': ['sphinx', 'furo']},
      entry_points={
        'console_scripts': ['pyimpflow=pyimpflow.cli:app']}
)
