from setuptools import find_packages, setup

setup(
   name='hadamard_hashing',
   version='0.1',
   description='Supervised learning-to-hash with Hadamard codebook targets, Hamming retrieval and mAP evaluation.',
   author='Mamxlam',
   author_email='mmalamat@csd.auth.gr',
   package_dir={'': 'src'},
   packages=find_packages(where='src'),
   python_requires='>=3.10',
   install_requires=[
       'numpy>=2.0',
       'pandas>=2.2',
       'scikit-learn>=1.5',
       'scipy>=1.13',
       'joblib>=1.4',
   ],
   entry_points={
       'console_scripts': [
           'hadamard-hashing=hadamard_hashing.cli:main',
       ],
   },
   scripts=[
            'tools/run_synthetic_pipeline.sh'
           ]
)
