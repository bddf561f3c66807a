"""Moving frames, differential invariants, and structured Noether conservation laws."""

from .symcore import (DegenerateExpression, Expr, Sym, diff, is_zero, normal_form,
                      opaque_function, rational, substitute, symbols)
from .jetspace import JetContext, MultiIndex, TotalVectorField, apply_vector_field, multi_index
from .groupaction import (AdjointRep, GeneratorsNotIndependent, GroupActionSpec,
                          InfinitesimalVF, ProlongedAction, SingularJacobian, adjoint_rep,
                          characteristic, characteristic_matrix, infinitesimals)
from .movingframe import (Frame, NormalizationSpec, NotSolvable, VerificationFailed,
                          is_invariant, solve_frame)
from .invariantcalc import (BasisSolveFailed, CommutatorTensor, CorrectionData, DiffForm,
                            InvOperator, OperatorPoly, RewriteNotTerminating,
                            commutator_tensor, correction_matrix, invariant_derivative,
                            invariant_one_forms, invariant_operators, lie_derivative_form,
                            one_form, syzygy, to_invariant_basis)
from .noether import (CheckReport, IdentityFailed, InvarianceFailed, Lagrangian, LawBundle,
                      NotInvariant, NotMatrixGroup, ShapeMismatch, SingularMinors,
                      curvature_matrices, divergence_check, equivariance_check,
                      euler_lagrange, euler_operator, first_minors,
                      invariantized_euler_lagrange, law_forms, laws_equivalent,
                      matrix_equivariance_check, noether_laws, pform_action,
                      structured_laws, vectors_from_boundary)

__version__ = "0.1.0"
