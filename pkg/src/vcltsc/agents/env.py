"""Decision-point view of the simulator for learning agents.

One step = pick a phase when the previous green expires, hold it for the
fixed green (after a yellow if the phase changed), then report the reward
accumulated over that interval.
"""

from __future__ import annotations

import numpy as np

from ..network import DemandSpec, Network, generate_demand, generate_trajectories, load_network
from ..sim import SimParams, SimWorld
from ..state import RewardWeights, StateEncoder, reward


class SignalEnv:
    def __init__(self, encoder: StateEncoder, network: Network | None = None,
                 demand: DemandSpec | None = None, horizon_s: float = 3600.0,
                 params: SimParams | None = None, weights: RewardWeights = RewardWeights(),
                 seed: int = 0, demand_every: int = 25):
        self.encoder = encoder
        self.network = network or load_network()
        self.demand = demand or DemandSpec()
        self.horizon_s = float(horizon_s)
        self.params = params or SimParams(detection_range_m=encoder.detection_range_m, check_every_step=False)
        self.weights = weights
        self.demand_every = demand_every
        self.rng = np.random.default_rng(seed)
        self.episode = -1
        self.routes = None
        self.world: SimWorld | None = None

    def new_routes(self):
        spec = DemandSpec(self.demand.flow_multiplier_range, self.demand.unit_flow,
                          self.demand.per_source_jitter, self.horizon_s)
        d = generate_demand(self.rng, spec, self.network.sources)
        return generate_trajectories(self.rng, self.network, d.counts, self.horizon_s)

    def reset(self, routes=None) -> np.ndarray:
        """Start an episode; routes are regenerated every ``demand_every`` episodes."""
        self.episode += 1
        if routes is not None:
            self.routes = routes
        elif self.routes is None or self.episode % self.demand_every == 0:
            self.routes = self.new_routes()
        self.world = SimWorld(self.routes, self.network, self.params)
        self._reader = self.world.new_reader()
        return self.encoder(self.world)

    def _scaled(self, m):
        # Reselecting the active phase skips the yellow, so its window is
        # shorter; summed wait and fuel are put on the switch-interval scale
        # to keep that from looking cheaper than it is.
        ref = self.params.fixed_green_s + self.params.yellow_s
        if m.window_s > 0:
            k = ref / m.window_s
            m.cur_waiting_s *= k
            m.cur_fuel_ml *= k
        return m

    def step(self, action: int) -> tuple[np.ndarray, float, bool]:
        w = self.world
        w.set_phase(int(action))
        w.step()
        while not w.awaiting_decision and w.time < self.horizon_s - 1e-9:
            w.step()
        r = reward(self._scaled(self._reader.read()), self.weights)
        done = w.time >= self.horizon_s - 1e-9
        return self.encoder(w), r, done
