"""Gate calibration and compilation for the coupled-qubit system.

Submodules
----------
twolevel : isolated-qubit pulse calibration (analytic two-level dynamics).
ramps    : constant-adiabaticity transfer ramps and smooth window profiles.
logical  : dressed logical frames and the logical action of a schedule.
windows  : coupler windows and conditional-phase calibration.
"""
