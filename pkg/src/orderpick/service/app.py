"""HTTP front end over the harness commands plus step-by-step simulator sessions."""

from __future__ import annotations

import logging
import math
import threading
import uuid

import numpy as np
from fastapi import FastAPI, HTTPException, Query

from .. import __version__, agents, harness
from ..config import PRESETS, ConfigError, resolve
from ..engine import ContractViolation, OrderPickingEnv, metrics_report
from ..marl.train import ConfigMismatch
from ..warehouse import InvalidParameter
from . import schemas

logger = logging.getLogger(__name__)


class ServiceError(Exception):
    def __init__(self, status: int, detail: str):
        super().__init__(detail)
        self.status = status
        self.detail = detail


def _config(req: schemas.ConfigRequest):
    return resolve(req.config, req.preset, req.overrides)


def _guard(fn, *args, **kwargs):
    """Run a command and translate failures into status codes.

    422 marks a bad request (config, missing files, hash mismatch); 409 a
    broken action contract; 500 anything that failed while running.
    """
    try:
        return fn(*args, **kwargs)
    except (ConfigError, InvalidParameter, FileNotFoundError, ConfigMismatch) as exc:
        raise ServiceError(422, str(exc)) from exc
    except ContractViolation as exc:
        raise ServiceError(409, str(exc)) from exc
    except ServiceError:
        raise
    except Exception as exc:
        logger.exception("command failed")
        raise ServiceError(500, f"{type(exc).__name__}: {exc}") from exc


# -- command handlers (also called in-process by the CLI) -----------------
def do_simulate(req: schemas.SimulateRequest) -> schemas.SimulateResponse:
    out = _guard(lambda: harness.simulate(_config(req), req.record_events))
    return schemas.SimulateResponse(**out)


def do_eval(req: schemas.EvalRequest) -> schemas.SimulateResponse:
    out = _guard(lambda: harness.evaluate_checkpoint(_config(req), req.checkpoint, req.record_events))
    return schemas.SimulateResponse(**out)


def do_train(req: schemas.TrainRequest, on_point=None) -> schemas.TrainResponse:
    out = _guard(lambda: harness.train(_config(req), req.resume, on_point))
    return schemas.TrainResponse(**out)


def do_bench(req: schemas.BenchRequest) -> schemas.BenchResponse:
    out = _guard(lambda: harness.bench(_config(req)))
    return schemas.BenchResponse(**out)


def do_layout(req: schemas.LayoutRequest) -> schemas.LayoutResponse:
    out = _guard(lambda: harness.export_layout(_config(req), req.format))
    return schemas.LayoutResponse(**out)


HANDLERS = {
    "simulate": (schemas.SimulateRequest, do_simulate),
    "eval": (schemas.EvalRequest, do_eval),
    "train": (schemas.TrainRequest, do_train),
    "bench": (schemas.BenchRequest, do_bench),
    "export-layout": (schemas.LayoutRequest, do_layout),
}


# -- sessions -----------------------------------------------------------
class SessionStore:
    def __init__(self):
        self._envs: dict[str, tuple[OrderPickingEnv, bool]] = {}
        self._lock = threading.Lock()

    def add(self, env: OrderPickingEnv, include_obs: bool) -> str:
        sid = uuid.uuid4().hex
        with self._lock:
            self._envs[sid] = (env, include_obs)
        return sid

    def get(self, sid: str) -> tuple[OrderPickingEnv, bool]:
        with self._lock:
            if sid not in self._envs:
                raise ServiceError(404, f"no session {sid}")
            return self._envs[sid]

    def drop(self, sid: str) -> None:
        with self._lock:
            if self._envs.pop(sid, None) is None:
                raise ServiceError(404, f"no session {sid}")


def _session_state(sid: str, env: OrderPickingEnv, obs) -> dict:
    st = env.state
    return {
        "session_id": sid,
        "tick": st.tick,
        "done": st.done,
        "num_agvs": env.num_agvs,
        "num_agents": env.num_agents,
        "locations": len(env.warehouse),
        "committed": [w.committed for w in st.workers],
        "observations": None if obs is None else [np.asarray(o).tolist() for o in obs],
    }


def create_app() -> FastAPI:
    app = FastAPI(title="orderpick", version=__version__)
    sessions = SessionStore()

    def call(fn, *args):
        try:
            return fn(*args)
        except ServiceError as exc:
            raise HTTPException(status_code=exc.status, detail=exc.detail) from exc

    @app.get("/health", response_model=schemas.Health)
    def health():
        return schemas.Health(version=__version__)

    @app.get("/presets")
    def presets():
        return {name: resolve(preset=name).model_dump() for name in PRESETS}

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate(req: schemas.SimulateRequest):
        return call(do_simulate, req)

    @app.post("/eval", response_model=schemas.SimulateResponse)
    def evaluate(req: schemas.EvalRequest):
        return call(do_eval, req)

    @app.post("/train", response_model=schemas.TrainResponse)
    def train(req: schemas.TrainRequest):
        return call(do_train, req)

    @app.post("/bench", response_model=schemas.BenchResponse)
    def bench(req: schemas.BenchRequest):
        return call(do_bench, req)

    @app.post("/export-layout", response_model=schemas.LayoutResponse)
    def export_layout(req: schemas.LayoutRequest):
        return call(do_layout, req)

    @app.post("/layout")
    def layout(req: schemas.ConfigRequest):
        return call(lambda: _guard(lambda: harness.layout_payload(_config(req))))

    @app.post("/sessions", response_model=schemas.SessionState)
    def create_session(req: schemas.SessionCreate):
        def make():
            env = harness.build_env(_config(req))
            obs = env.reset(req.seed)
            sid = sessions.add(env, req.include_observations)
            return _session_state(sid, env, obs if req.include_observations else None)
        return call(lambda: _guard(make))

    @app.post("/sessions/{sid}/step", response_model=schemas.StepResponse)
    def step(sid: str, req: schemas.StepRequest):
        def run():
            env, include_obs = sessions.get(sid)
            obs, rewards, _, info = env.step(req.actions, check_masks=req.check_masks, observe=include_obs)
            return {**_session_state(sid, env, obs), "rewards": rewards.tolist(),
                    "picks": info["picks"], "completed": info["completed"]}
        return call(lambda: _guard(run))

    @app.get("/sessions/{sid}/mask/{agent}", response_model=schemas.MaskResponse)
    def mask(sid: str, agent: int, agv: list[int] = Query(default=[])):
        """Legal targets for ``agent``.  Picker masks depend on what the AGVs
        choose this tick; pass those choices as ``agv`` in AGV id order
        (-1 for an AGV that is committed)."""
        def run():
            env, _ = sessions.get(sid)
            if not 0 <= agent < env.num_agents:
                raise ServiceError(422, f"agent {agent} out of range")
            if agv and len(agv) != env.num_agvs:
                raise ServiceError(422, f"expected {env.num_agvs} AGV choices, got {len(agv)}")
            pending = agents.agv_choices(env.state, [None if a < 0 else a for a in agv]) if agv else None
            legal = agents.action_mask(env.state, agent, pending=pending)
            return {"agent": agent, "legal": np.flatnonzero(legal).tolist()}
        return call(lambda: _guard(run))

    @app.get("/sessions/{sid}/metrics", response_model=schemas.SessionMetrics)
    def metrics(sid: str):
        def run():
            env, _ = sessions.get(sid)
            r = metrics_report(env.state)
            lead = None if math.isnan(r.mean_lead_time_s) else r.mean_lead_time_s
            return {"session_id": sid, "done": env.state.done, **r.row(), "mean_lead_time_s": lead,
                    "lines_picked": r.lines_picked, "orders_completed": r.orders_completed,
                    "ticks": r.ticks}
        return call(lambda: _guard(run))

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        call(lambda: _guard(sessions.drop, sid))
        return {"deleted": sid}

    return app


app = create_app()
