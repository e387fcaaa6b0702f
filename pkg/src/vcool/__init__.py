"""Replica-based virtual cooling simulator for lattice bosons and fermions.

Collective number-resolved measurements on n copies of a thermal lattice
system reproduce expectation values of the same system at temperature T/n.
This package builds the required Fock spaces, replica operators and
estimators, and validates every protocol against exact density-matrix
oracles.
"""

__version__ = "0.1.0"

from .fock import (BOSON, FERMION, FockBasis, Operator, enumerate_basis,
                   ladder, number_op, total_number_op)
from .model import ModelParams, bose_hubbard, beamsplitter_hamiltonian, \
    fermi_hopping
from .thermal import (DensityMatrix, ThermalProvenance, thermal_state,
                      grand_canonical_state, matrix_power_state, purity,
                      renyi_entropy, trace_distance, partial_trace,
                      partial_trace_vector, fit_effective_ensemble)
from .replica import (ReplicaBasis, replica_basis, permutation_op, symmetrize,
                      fourier_op, apply_fourier, phase_op, phase_values,
                      verify_swap_identity, fermionic_fourier_op,
                      fermion_v_op, v_values, FermionMonomial,
                      v_commutant_check)
from .protocol import (NumberObservable, JointState, ShotRecord,
                       EstimateReport, fourier_transformed_joint,
                       joint_from_transformed, virtual_expectation_exact,
                       interferometric_estimate, interferometric_expectation,
                       fermionic_estimate, sample_shot_records, ancilla_step,
                       ancilla_combine, ancilla_sampled_estimate, distill,
                       buffered_estimate, shots_scaling_study)
from .correlator import (unconventional_correlator, imaginary_time_correlator,
                         correlator_temperature_study,
                         reference_correlator_study)
from .quench import (QuenchConfig, product_state, evolve, subsystem_rdm,
                     thermalization_diagnostic, quench_cooling_experiment)
