"""Caesium D1 constants and the four-wave-mixing level scheme.

Values are taken from standard alkali reference data (Steck, "Cesium D
Line Data"; CODATA for fundamental constants), not fitted here.  The
operational cell temperature defaults to 43 C.
"""

from __future__ import annotations

import math

from .atomic import CGInput, RamanLevelScheme, clebsch_gordan, wigner_6j

__all__ = [
    "CS_MASS_KG",
    "D1_WAVELENGTH_M",
    "D1_NATURAL_LINEWIDTH_MHZ",
    "D1_EXCITED_HYPERFINE_SPLITTING_MHZ",
    "NUCLEAR_SPIN",
    "doppler_width_mhz",
    "raman_path_coupling",
    "cs_d1_fwm_scheme",
]

BOLTZMANN_J_PER_K = 1.380649e-23
ATOMIC_MASS_KG = 1.66053906660e-27

CS_MASS_KG = 132.905451931 * ATOMIC_MASS_KG
D1_WAVELENGTH_M = 894.59295986e-9
# gamma / 2 pi of the 6P_1/2 level
D1_NATURAL_LINEWIDTH_MHZ = 4.575
# 6P_1/2 hyperfine splitting, F' = 3 to F' = 4
D1_EXCITED_HYPERFINE_SPLITTING_MHZ = 1167.68
NUCLEAR_SPIN = 3.5


def doppler_width_mhz(temperature_c: float = 43.0, wavelength_m: float = D1_WAVELENGTH_M) -> float:
    """1/e half width of the Doppler profile, v_p / lambda, in MHz."""
    t_kelvin = temperature_c + 273.15
    v_p = math.sqrt(2.0 * BOLTZMANN_J_PER_K * t_kelvin / CS_MASS_KG)
    return v_p / wavelength_m / 1e6


def raman_path_coupling(
    f_ground: float,
    m_initial: float,
    m_final: float,
    f_excited: float,
    q_in: float,
    q_out: float,
    j_ground: float = 0.5,
    j_excited: float = 0.5,
    nuclear_spin: float = NUCLEAR_SPIN,
) -> float:
    """Signed strength of one two-photon path through a given excited level.

    q_in raises the initial Zeeman state into the excited one
    (m' = m_i + q_in), q_out connects it down to the final state
    (m_f = m' + q_out).  Both dipole elements are expanded onto
    <F' m'; 1 q | F m>, giving the path weight

        CG(F',m';1,m_i-m'|F,m_i) * CG(F',m';1,m_f-m'|F,m_f)
        * (2F'+1) * {J J' 1; F' F I}^2.

    Phases and reduced factors common to all excited levels are dropped:
    only relative weights and signs matter for locating a coupling zero.
    """
    m_excited = m_initial + q_in
    if m_excited + q_out != m_final:
        return 0.0
    absorb = clebsch_gordan(
        CGInput(j1=f_excited, m1=m_excited, j2=1, m2=m_initial - m_excited, j=f_ground, m=m_initial)
    )
    emit = clebsch_gordan(
        CGInput(j1=f_excited, m1=m_excited, j2=1, m2=m_final - m_excited, j=f_ground, m=m_final)
    )
    hyperfine = (2 * f_excited + 1) * wigner_6j(
        j_ground, j_excited, 1, f_excited, f_ground, nuclear_spin
    ) ** 2
    return absorb * emit * hyperfine


def cs_d1_fwm_scheme(temperature_c: float = 43.0) -> RamanLevelScheme:
    """Level scheme of the parasitic read-out Raman transition.

    The sigma-minus component of the read light couples |4,4> to the
    m=3 excited states of both D1 hyperfine levels; the scattered pi
    photon closes the transition into |4,3>.  Detunings are measured
    from the F'=4 resonance; F'=3 lies one hyperfine splitting below.
    """
    levels = ((4, 0.0), (3, D1_EXCITED_HYPERFINE_SPLITTING_MHZ))
    couplings = [
        raman_path_coupling(f_ground=4, m_initial=4, m_final=3, f_excited=f, q_in=-1, q_out=0)
        for f, _ in levels
    ]
    scale = max(abs(c) for c in couplings)
    return RamanLevelScheme(
        offsets_mhz=tuple(offset for _, offset in levels),
        couplings=tuple(c / scale for c in couplings),
        gamma_mhz=D1_NATURAL_LINEWIDTH_MHZ,
        doppler_mhz=doppler_width_mhz(temperature_c),
    )
