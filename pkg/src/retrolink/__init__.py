"""Retro-reflective RIS-assisted THz power-cycle and SWIPT simulator."""

from .analysis import (FieldMap, ObservationGrid, SweepPoint, SweepResult, beamwidth_3db,
                       calibrate_saturation_power, field_cut, field_map, field_of_view, find_dmax,
                       peak_to_sidelobe_ratio, svd_dominant_mode, sweep_angle, sweep_array_size,
                       sweep_distance)
from .channel import (ChannelMatrix, ChannelParams, RadiationPattern, absorption_loss,
                      build_channel_matrix, directivity, link_coefficient, propagate, spreading_loss)
from .config import ScenarioConfig, dump_config, load_config
from .errors import *  # noqa: F401,F403
from .frontend import AmplifierModel, ReflectionCoefficient, SplitRatios
from .geometry import PlanarArray, Pose, aspect_angle, build_planar_array, element_position
from .power_cycle import (ConvergenceCriteria, CycleState, CycleTrace, cycle_step, initial_excitation,
                          run_cycle, run_to_convergence, transmission_efficiency)
from .swipt import LinkMetrics, NoiseModel, RectifierModel, channel_capacity, link_metrics

__version__ = "0.1.0"
