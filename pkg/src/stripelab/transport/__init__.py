"""Optimal transport between the two phases of a binary pattern."""
from .entropic import ConvergenceError, EntropicPlan, approx_d1, sinkhorn_bracket
from .exact import (DEFAULT_CAP, CapExceededError, ImbalanceError, KantorovichPotential, TransportError,
                    TransportPlan, c_transform, dual_potential, exact_d1, save_plan_csv,
                    save_potential_csv, solve_exact)
from .rays import (MassChart, RayField, RayOptions, extract_rays, inverse_mass_coordinate,
                   inverse_mass_values, mass_coordinate, mass_coordinate_values, ray_cost_lower_bound,
                   ray_crossings, save_rays_csv)
from .stripe_map import (ChartError, StripeCost, StripeTransportMap, box_cost, box_expansion,
                         discrete_map_plan, stripe_transport_map, transverse_from_mass, upper_bound_d1)
