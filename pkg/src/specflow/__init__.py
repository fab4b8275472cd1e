"""specflow: a numerical laboratory for the spectral flow of a family of
radial Dirac-type operators attached to circle-symmetric contact profiles.

Modules
-------
profiles      piecewise-polynomial contact shapes, mode charts, Taylor data
matrix_sf     spectral flow of finite Hermitian paths (ground truth engine)
radial_dirac  the reduced one-dimensional operators, crossings, slopes
oscillator    closed-form oscillator kernels and second-order eigensections
counting      lattice counts, boundary eta terms, asymptotic reports
almost_eigen  almost-eigenvalue and coherence lemmas on finite systems
cli           the ``specflow`` command line
"""

__version__ = "0.1.0"

__all__ = ["__version__"]
