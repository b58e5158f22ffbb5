import logging
import os
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException
from pydantic import BaseModel, Field

from src.domain.entities import EpisodeSpec, MetricReport
from src.domain.numerics import no_grad
from src.engine.agent import NavigationModel
from src.engine.config import NavigationConfig, load_config
from src.engine.evaluation import SegmentRecord, build_model, load_model, segment_record
from src.engine.rollout import PolicyMode, run_episode, trajectory_log_records
from src.processing.tokenizer import Vocabulary
from src.simulation.episodes import make_episode
from src.simulation.world import build_vocabulary, generate_world

logger = logging.getLogger(__name__)

# --- Configuration ---
CHECKPOINT_PATH = os.environ.get("NAV_CHECKPOINT", "data/models/best.ckpt")
CONFIG_PATH = os.environ.get("NAV_CONFIG", "config/navigation.yaml")


class ServiceState:
    config: NavigationConfig = NavigationConfig()
    vocab: Vocabulary = build_vocabulary()
    model: Optional[NavigationModel] = None
    checkpoint_loaded: bool = False


state = ServiceState()


# --- Lifecycle Management ---
@asynccontextmanager
async def lifespan(app: FastAPI):
    state.config = load_config(CONFIG_PATH)
    state.model, state.checkpoint_loaded = None, False
    checkpoint = Path(CHECKPOINT_PATH)
    vocab_file = checkpoint.parent / "vocab.txt"
    state.vocab = Vocabulary.load(vocab_file) if vocab_file.exists() else build_vocabulary()
    if checkpoint.exists():
        try:
            state.model = load_model(checkpoint, state.vocab, state.config)
            state.checkpoint_loaded = True
            logger.info("Checkpoint loaded from %s", checkpoint)
        except ValueError as e:
            logger.warning("Could not load checkpoint %s: %s", checkpoint, e)
    else:
        logger.info("No checkpoint at %s; serving a freshly initialised model.", checkpoint)
    if state.model is None:
        state.model = build_model(state.vocab, state.config)
    yield


app = FastAPI(
    title="Instruction-State Navigation",
    description="Clause segmentation and instruction-state navigation rollouts.",
    version="0.1.0",
    lifespan=lifespan,
)


# --- DTOs ---
class SegmentRequest(BaseModel):
    instructions: list[str] = Field(..., min_length=1)


class RolloutRequest(BaseModel):
    world_seed: int = 0
    episode_seed: int = 0
    n_nodes: Optional[int] = Field(None, ge=1)
    cgip_enabled: bool = True
    fgip_enabled: bool = True


class RolloutResponse(BaseModel):
    episode: EpisodeSpec
    records: list[dict]
    metrics: MetricReport


def _model() -> NavigationModel:
    if state.model is None:
        raise HTTPException(status_code=503, detail="Model is not initialised.")
    return state.model


# --- Endpoints ---
@app.get("/")
def health_check():
    return {"status": "active", "system": "Instruction-State Navigation", "checkpoint_loaded": state.checkpoint_loaded}


@app.post("/segment", response_model=list[SegmentRecord])
def segment(request: SegmentRequest):
    model = _model()
    try:
        return [segment_record(model, state.vocab, text) for text in request.instructions]
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))


@app.post("/rollout", response_model=RolloutResponse)
def rollout(request: RolloutRequest):
    model = _model()
    config = state.config
    try:
        world = generate_world(request.world_seed, request.n_nodes or config.n_nodes, state.vocab)
        spec = make_episode(world, request.episode_seed, config.max_legs, config.success_radius)
        with no_grad():
            result = run_episode(
                model,
                world,
                spec,
                state.vocab,
                policy=PolicyMode.GREEDY,
                seed=config.seed,
                max_steps=config.max_steps,
                noise_sigma=config.noise_sigma,
                cgip_enabled=request.cgip_enabled,
                fgip_enabled=request.fgip_enabled,
            )
    except ValueError as e:
        raise HTTPException(status_code=400, detail=str(e))
    return RolloutResponse(episode=spec, records=trajectory_log_records(result), metrics=result.metrics)


if __name__ == "__main__":
    import uvicorn

    uvicorn.run("src.api.main:app", host="127.0.0.1", port=8000, reload=True)
