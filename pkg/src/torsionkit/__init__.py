"""Torsion invariants of finite Hilbert cochain complexes, filtrations and fibrations."""

__version__ = "0.1.0"

from .cochain import (ChainContraction, ChainMap, CochainComplex, CohomologyStructure,
                      FiniteHilbertCochainComplex, ShortExactSequence, build_contraction, cone,
                      harmonic_structure, long_exact_sequence, rho, rho_acyclic, rho_closed_form,
                      rho_closed_forms, rho_ses, t)
from .cwlocal import (AlternatingSystemFamily, CWComplexData, LocalSystem, build_cochain,
                      is_unimodular, milnor_torsion, phi_hom)
from .detline import DetElement, DetLine, det_of_map, rho_bar, rho_bar_fil, rho_bar_LS
from .errors import *  # noqa: F401,F403
from .fibration import (FibrationModel, LeraySerreData, gysin_torsion, leray_serre, rho_LS,
                        skeletal_filtration, verify_fibration_formula, wang_torsion)
from .filtration import (FilteredComplex, SpectralObjects, rho_fil, rho_fil_ge2, spectral,
                         verify_filtered_torsion)
from .linalg import HilbertSpace, LinearMap, Subspace, Tolerance, log_vol
