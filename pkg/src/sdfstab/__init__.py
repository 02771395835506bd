"""Lie-bracket certificates of Lyapunov decrease and sampled-data stabilization
for single-input affine systems ``x' = f(x) + u g(x)``."""

from .classifier import Classification, GridSpec, ScanReport, Tag, check_214, classify_point, scan_region
from .liealg import BracketWord, OperatorProduct, VectorField, hall_basis, lie_bracket
from .simloop import Partition, SampledTrajectory, run_closed_loop, stability_sweep
from .symexpr import ScalarField, parse, simplify
from .synth import ControlSchedule, DecreaseWitness, SynthParams, synthesize
from .systems import SystemDef, corollary2, verify_template

__version__ = "0.1.0"
