"""A scikit-learn style front end: fit on an instance, read the plan off the fitted attributes."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .bounding import solve_bounds, solve_exact
from .grid import Instance, check_instance
from .ppsr import BoundLog
from .randomized import orchestrate, plan_schedules

MODES = ("exact", "bounds", "randomized")


class RestorationPlanner(BaseEstimator):
    """Partition buses into black-start islands and schedule unit startups.

    ``fit`` takes an :class:`Instance` in place of a feature matrix.  After
    fitting, ``labels_[k]`` is the BS bus whose island holds ``buses_[k]``
    (-1 for transshipment buses left out of every island).

    >>> from blackstart.synth import worked_example
    >>> RestorationPlanner().fit(worked_example()).restoration_time_
    4
    """

    def __init__(self, mode: str = "exact", backend: str | None = None, seed: int = 0, n_runs: int = 8,
                 horizon: int | None = None, deadline_sec: float | None = None):
        self.mode = mode
        self.backend = backend
        self.seed = seed
        self.n_runs = n_runs
        self.horizon = horizon
        self.deadline_sec = deadline_sec

    def fit(self, X: Instance, y=None):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        inst = check_instance(X)
        self.bound_log_ = BoundLog(timings=False)
        self.lower_bound_ = None
        if self.mode == "exact":
            lb, sol = solve_exact(inst, self.backend, self.bound_log_, self.deadline_sec)
            self.lower_bound_ = lb
            plan, schedules, rt = (sol.plan, dict(sol.schedules), sol.rt) if sol else (None, {}, None)
        elif self.mode == "bounds":
            res = solve_bounds(inst, self.backend, self.deadline_sec, self.seed, self.bound_log_)
            self.lower_bound_ = res.lower
            sol = res.solution
            plan, schedules, rt = (sol.plan, dict(sol.schedules), sol.rt) if sol else (None, {}, None)
        else:
            camp = orchestrate(inst, self.n_runs, self.horizon, self.deadline_sec, self.seed, 1, self.backend)
            self.lower_bound_ = camp.lower_bound
            self.runs_ = camp.runs
            best = camp.best
            plan, rt = (best.final_plan, best.final_rt) if best else (None, None)
            schedules = {}
            if plan is not None:
                schedules = plan_schedules(inst, plan, max(rt, 1), self.backend)
        if plan is None:
            raise RuntimeError("no feasible restoration plan found")
        self.plan_ = plan
        self.schedules_ = schedules
        self.restoration_time_ = rt
        self.buses_ = np.array(sorted(set(inst.buses)))
        owner = plan.assignment
        self.labels_ = np.array([owner.get(int(b), -1) for b in self.buses_])
        return self

    def predict(self, X: Instance | None = None) -> np.ndarray:
        """Island labels of the fitted instance (``X`` must be that instance or ``None``)."""
        check_is_fitted(self, "labels_")
        if X is not None and sorted(set(X.buses)) != self.buses_.tolist():
            raise ValueError("predict expects the instance the planner was fitted on")
        return self.labels_

    def fit_predict(self, X: Instance, y=None) -> np.ndarray:
        return self.fit(X).labels_
