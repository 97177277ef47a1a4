"""Battery full-charge-capacity estimation from charging telemetry."""
from .cell_sim import (CellSpec, ChargerSpec, ChargingSample, ControllerSpec, FleetConfig,
                       LoadProfile, get_preset, run_charge, simulate_charge, simulate_fleet)
from .crowd import (DeviceAssessment, PipelineParams, ReferenceModel, assess_device,
                    build_reference, fleet_report, preprocess)
from .estimator import (ExpCapacityModel, FccEstimate, build_capacity_profile,
                        c_rate_over_interval, cumulative_rate_curve, detect_cc_end,
                        estimate_fcc, estimate_from_samples, fit_exp_model, select_c_rate)
from .estimators import CapacityCurveRegressor, CrowdFccModel, RateFccEstimator

__version__ = "0.1.0"
