"""Driver/responder simulation, convergence certificates and output statistics."""

from .certificate import ConvergenceCertificate, convergence_certificate, symmetric_part
from .integrate import (DEFAULT_DT, CascadeRun, DivergenceError, Trajectory, integrate,
                        run_steps, simulate_cascade)
from .stats import (DEFAULT_TRANSIENT, DelayNotFoundError, EmpiricalDistribution,
                    StationarityReport, autocorrelation, draw_initial_conditions,
                    estimate_density, ks_distance, select_delay, stationarity_check,
                    zero_one_chaos_test)
from .sync import SyncReport, fit_decay_rate, settle_time, sync_report
from .systems import (INPUT_MAPS, AffineResponder, ConstantDriver, Driver, LorenzDriver,
                      OscillatorSystem, default_driver, default_responder, quad_sine_input_map)
