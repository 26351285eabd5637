from setuptools import find_packages, setup

setup(
    name='mfcarbon',
    package_dir={'': 'src'},
    packages = find_packages(where='src'),
    version='0.0.1',
    description='Mean field cap-and-trade solver and Monte Carlo simulator.',
    license='GPLv3',
    python_requires='>=3.8',
    install_requires=['numpy', 'scipy', 'numba', 'pandas'],
    entry_points={
        'console_scripts': ['mfcarbon = mfcarbon.experiment:main'],
    }
)
