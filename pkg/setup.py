import re
from os import path
from setuptools import setup, find_packages


here = path.abspath(path.dirname(__file__))

with open(path.join(here, 'README.md'), encoding='utf-8') as fh:
    long_description = fh.read()

with open(path.join(here, 'pymixcp', '__init__.py'), 'r') as fh:
    for line in fh.readlines():
        match = re.match(r'__version__ = \'(.+)\'', line)
        if match:
            version = match.groups()[0]
            break
    else:
        raise ValueError('Could not get version from pymixcp/__init__.py')


setup(name='pymixcp',
      version=version,
      description=('Mixed-precision stochastic gradient CP tensor '
                   'decomposition with emulated low-precision arithmetic.'),
      long_description=long_description,
      long_description_content_type='text/markdown',
      classifiers=[
          'Development Status :: 4 - Beta',
          'Programming Language :: Python :: 3.8',
          'Programming Language :: Python :: 3.9',
          'Programming Language :: Python :: 3.10',
          'Programming Language :: Python :: 3.11',
          'License :: OSI Approved :: BSD License',
          'Topic :: Scientific/Engineering :: Mathematics',
      ],
      packages=find_packages(),
      python_requires='>=3.8',
      install_requires=['numpy>=1.17', 'scipy', 'pandas', 'tqdm'],
      tests_require=['pytest', 'pytest-cov', 'tox'],
      entry_points={'console_scripts': ['pymixcp = pymixcp.cli:main']},
      keywords=['tensor', 'decomposition', 'mixed precision', 'quantization']
      )
