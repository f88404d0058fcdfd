"""HTTP annotation service: humans as the causal oracle.

Manipulated images are enqueued into an experiment; annotators fetch sessions
(pages of image grids), type one symbol per image (or "?"), and the service
aggregates votes by strict plurality once a quorum is reached.  Decided labels
are committed back as causal dataset records via the experiment's
symbol-to-value map.

All mutations serialize through a single lock and append to a line-delimited
JSON event log; reads take snapshots under the same lock.  A state directory
makes the store durable: events replay on load, and an explicit snapshot
compacts them.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel

from .errors import (
    AnnotationError,
    BadLabel,
    DuplicateVote,
    InsufficientImages,
    NoDecidedLabels,
    UnknownExperiment,
)

UNKNOWN = "?"


@dataclass
class Experiment:
    id: str
    alphabet: tuple[str, ...]
    label_values: dict[str, float]
    quorum: int = 5
    grid_rows: int = 5
    grid_cols: int = 5
    pages_per_session: int = 10
    image_order: list[str] = field(default_factory=list)

    @property
    def page_size(self) -> int:
        return self.grid_rows * self.grid_cols

    @property
    def session_size(self) -> int:
        return self.page_size * self.pages_per_session


@dataclass
class StoredImage:
    id: str
    experiment_id: str
    pixels: str  # base64 bit-packed
    side: int


@dataclass
class Session:
    id: str
    experiment_id: str
    annotator: str
    pages: list[list[str]]
    cursor: int = 0

    @property
    def completed(self) -> bool:
        return self.cursor >= len(self.pages)


@dataclass
class AggregateLabel:
    image_id: str
    histogram: dict[str, int]
    decided: bool
    decided_label: str | None
    conflict: bool = False

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "histogram": self.histogram,
            "decided": self.decided,
            "decided_label": self.decided_label,
            "conflict": self.conflict,
        }


class AnnotationStore:
    def __init__(self, state_dir: str | Path | None = None):
        self._lock = threading.Lock()
        self.experiments: dict[str, Experiment] = {}
        self.images: dict[str, StoredImage] = {}
        # votes[experiment][image][annotator] = label
        self.votes: dict[str, dict[str, dict[str, str]]] = {}
        self.committed: dict[str, dict[str, float]] = {}
        self.sessions: dict[str, Session] = {}
        self._state_dir = Path(state_dir) if state_dir else None
        if self._state_dir:
            self._state_dir.mkdir(parents=True, exist_ok=True)
            self._replay()

    # --- persistence -------------------------------------------------------

    def _events_path(self) -> Path:
        return self._state_dir / "events.jsonl"

    def _snapshot_path(self) -> Path:
        return self._state_dir / "snapshot.json"

    def _log(self, event: dict) -> None:
        if not self._state_dir:
            return
        event = dict(event, ts=time.time())
        with open(self._events_path(), "a") as fh:
            fh.write(json.dumps(event) + "\n")

    def _replay(self) -> None:
        snap = self._snapshot_path()
        applied = 0
        if snap.exists():
            doc = json.loads(snap.read_text())
            applied = doc["events_applied"]
            for e in doc["experiments"]:
                exp = Experiment(**{**e, "alphabet": tuple(e["alphabet"])})
                self.experiments[exp.id] = exp
                self.votes.setdefault(exp.id, {})
                self.committed.setdefault(exp.id, {})
            for m in doc["images"]:
                self.images[m["id"]] = StoredImage(**m)
            for exp_id, per_image in doc["votes"].items():
                self.votes[exp_id] = {k: dict(v) for k, v in per_image.items()}
            for exp_id, labels in doc["committed"].items():
                self.committed[exp_id] = dict(labels)
        if not self._events_path().exists():
            return
        with open(self._events_path()) as fh:
            for n, line in enumerate(fh):
                if n < applied or not line.strip():
                    continue
                self._apply(json.loads(line))

    def _apply(self, event: dict) -> None:
        kind = event["kind"]
        if kind == "create_experiment":
            e = event["experiment"]
            exp = Experiment(**{**e, "alphabet": tuple(e["alphabet"])})
            self.experiments[exp.id] = exp
            self.votes.setdefault(exp.id, {})
            self.committed.setdefault(exp.id, {})
        elif kind == "add_image":
            img = StoredImage(**event["image"])
            self.images[img.id] = img
            self.experiments[img.experiment_id].image_order.append(img.id)
        elif kind == "vote":
            self.votes[event["experiment_id"]].setdefault(event["image_id"], {})[
                event["annotator"]
            ] = event["label"]
        elif kind == "commit":
            self.committed[event["experiment_id"]][event["image_id"]] = event["value"]

    def snapshot(self) -> None:
        if not self._state_dir:
            return
        with self._lock:
            events = 0
            if self._events_path().exists():
                with open(self._events_path()) as fh:
                    events = sum(1 for line in fh if line.strip())
            doc = {
                "events_applied": events,
                "experiments": [
                    {
                        "id": e.id,
                        "alphabet": list(e.alphabet),
                        "label_values": e.label_values,
                        "quorum": e.quorum,
                        "grid_rows": e.grid_rows,
                        "grid_cols": e.grid_cols,
                        "pages_per_session": e.pages_per_session,
                        "image_order": e.image_order,
                    }
                    for e in self.experiments.values()
                ],
                "images": [m.__dict__ for m in self.images.values()],
                "votes": self.votes,
                "committed": self.committed,
            }
            self._snapshot_path().write_text(json.dumps(doc))

    # --- domain operations ---------------------------------------------------

    def _get_experiment(self, experiment_id: str) -> Experiment:
        exp = self.experiments.get(experiment_id)
        if exp is None:
            raise UnknownExperiment(f"no experiment {experiment_id!r}")
        return exp

    def create_experiment(
        self,
        experiment_id: str,
        alphabet: list[str],
        label_values: dict[str, float],
        quorum: int = 5,
        grid_rows: int = 5,
        grid_cols: int = 5,
        pages_per_session: int = 10,
    ) -> Experiment:
        with self._lock:
            if UNKNOWN in alphabet:
                raise BadLabel("the unknown symbol is implicit, not in the alphabet")
            exp = Experiment(
                id=experiment_id,
                alphabet=tuple(alphabet),
                label_values=dict(label_values),
                quorum=quorum,
                grid_rows=grid_rows,
                grid_cols=grid_cols,
                pages_per_session=pages_per_session,
            )
            self.experiments[exp.id] = exp
            self.votes.setdefault(exp.id, {})
            self.committed.setdefault(exp.id, {})
            self._log(
                {
                    "kind": "create_experiment",
                    "experiment": {
                        "id": exp.id,
                        "alphabet": list(exp.alphabet),
                        "label_values": exp.label_values,
                        "quorum": exp.quorum,
                        "grid_rows": exp.grid_rows,
                        "grid_cols": exp.grid_cols,
                        "pages_per_session": exp.pages_per_session,
                    },
                }
            )
            return exp

    def add_images(self, experiment_id: str, images: list[dict]) -> list[str]:
        with self._lock:
            exp = self._get_experiment(experiment_id)
            ids = []
            for entry in images:
                image_id = entry.get("id") or uuid.uuid4().hex
                img = StoredImage(
                    id=image_id,
                    experiment_id=experiment_id,
                    pixels=entry["pixels"],
                    side=int(entry["side"]),
                )
                self.images[image_id] = img
                exp.image_order.append(image_id)
                ids.append(image_id)
                self._log({"kind": "add_image", "image": img.__dict__})
            return ids

    def _vote_count(self, experiment_id: str, image_id: str) -> int:
        return len(self.votes[experiment_id].get(image_id, {}))

    def create_session(self, experiment_id: str, annotator: str) -> Session:
        with self._lock:
            exp = self._get_experiment(experiment_id)
            eligible = [
                (self._vote_count(experiment_id, iid), pos, iid)
                for pos, iid in enumerate(exp.image_order)
                if self._vote_count(experiment_id, iid) < exp.quorum
                and annotator not in self.votes[experiment_id].get(iid, {})
            ]
            if len(eligible) < exp.session_size:
                raise InsufficientImages(
                    f"need {exp.session_size} images open to {annotator!r}, "
                    f"have {len(eligible)}"
                )
            eligible.sort()  # lowest vote count first, then insertion order
            chosen = [iid for _, _, iid in eligible[: exp.session_size]]
            seed_material = f"{experiment_id}:{annotator}:{len(self.sessions)}"
            seed = int.from_bytes(
                hashlib.sha256(seed_material.encode()).digest()[:8], "big"
            )
            rng = np.random.default_rng(seed)
            order = rng.permutation(len(chosen))
            shuffled = [chosen[k] for k in order]
            pages = [
                shuffled[p : p + exp.page_size]
                for p in range(0, exp.session_size, exp.page_size)
            ]
            session = Session(
                id=uuid.uuid4().hex,
                experiment_id=experiment_id,
                annotator=annotator,
                pages=pages,
            )
            self.sessions[session.id] = session
            return session

    def get_session(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownExperiment(f"no session {session_id!r}")
        return session

    def get_page(self, session_id: str, page: int) -> list[StoredImage]:
        with self._lock:
            session = self.get_session(session_id)
            if not (0 <= page < len(session.pages)):
                raise UnknownExperiment(f"session has no page {page}")
            return [self.images[iid] for iid in session.pages[page]]

    def submit_labels(self, session_id: str, page: int, labels: dict[str, str]) -> int:
        with self._lock:
            session = self.get_session(session_id)
            exp = self._get_experiment(session.experiment_id)
            if not (0 <= page < len(session.pages)):
                raise UnknownExperiment(f"session has no page {page}")
            page_ids = set(session.pages[page])
            if set(labels) != page_ids:
                raise BadLabel("labels must cover exactly the page's images")
            allowed = set(exp.alphabet) | {UNKNOWN}
            for image_id, label in labels.items():
                if label not in allowed:
                    raise BadLabel(f"label {label!r} not in alphabet {sorted(allowed)}")
            per_image = self.votes[session.experiment_id]
            for image_id, label in labels.items():
                existing = per_image.get(image_id, {}).get(session.annotator)
                if existing is not None and existing != label:
                    raise DuplicateVote(
                        f"{session.annotator!r} already voted {existing!r} on {image_id}"
                    )
            recorded = 0
            for image_id, label in labels.items():
                existing = per_image.get(image_id, {}).get(session.annotator)
                if existing is None:
                    per_image.setdefault(image_id, {})[session.annotator] = label
                    recorded += 1
                    self._log(
                        {
                            "kind": "vote",
                            "experiment_id": session.experiment_id,
                            "image_id": image_id,
                            "annotator": session.annotator,
                            "label": label,
                        }
                    )
            if page == session.cursor:
                session.cursor += 1
            return recorded

    def _decide(self, exp: Experiment, histogram: dict[str, int]) -> str | None:
        total = sum(histogram.values())
        if total < exp.quorum:
            return None
        best = max(histogram.values())
        winners = [label for label, n in histogram.items() if n == best]
        if len(winners) != 1 or winners[0] == UNKNOWN:
            return None
        return winners[0]

    def aggregate(self, experiment_id: str) -> list[AggregateLabel]:
        with self._lock:
            exp = self._get_experiment(experiment_id)
            out = []
            for image_id in exp.image_order:
                votes = self.votes[experiment_id].get(image_id, {})
                histogram: dict[str, int] = {}
                for label in votes.values():
                    histogram[label] = histogram.get(label, 0) + 1
                decided_label = self._decide(exp, histogram)
                committed = self.committed[experiment_id].get(image_id)
                conflict = (
                    committed is not None
                    and decided_label is not None
                    and exp.label_values.get(decided_label) != committed
                )
                out.append(
                    AggregateLabel(
                        image_id=image_id,
                        histogram=histogram,
                        decided=decided_label is not None,
                        decided_label=decided_label,
                        conflict=conflict,
                    )
                )
            return out

    def commit(self, experiment_id: str) -> dict:
        aggregates = self.aggregate(experiment_id)
        with self._lock:
            exp = self._get_experiment(experiment_id)
            delta = []
            conflicts = []
            decided_any = False
            for agg in aggregates:
                if not agg.decided:
                    continue
                decided_any = True
                value = exp.label_values[agg.decided_label]
                previous = self.committed[experiment_id].get(agg.image_id)
                if previous is not None:
                    if previous != value:
                        conflicts.append(agg.image_id)
                    continue
                self.committed[experiment_id][agg.image_id] = value
                img = self.images[agg.image_id]
                delta.append(
                    {
                        "image_id": agg.image_id,
                        "pixels": img.pixels,
                        "side": img.side,
                        "label_value": value,
                    }
                )
                self._log(
                    {
                        "kind": "commit",
                        "experiment_id": experiment_id,
                        "image_id": agg.image_id,
                        "value": value,
                    }
                )
            if not decided_any and not self.committed[experiment_id]:
                raise NoDecidedLabels(f"nothing decided in {experiment_id!r}")
            pending = sum(1 for a in aggregates if not a.decided)
            return {"records": delta, "pending": pending, "conflicts": conflicts}


# --- HTTP layer ----------------------------------------------------------------


class CreateExperimentBody(BaseModel):
    experiment_id: str
    alphabet: list[str]
    label_values: dict[str, float]
    quorum: int = 5
    grid_rows: int = 5
    grid_cols: int = 5
    pages_per_session: int = 10


class AddImagesBody(BaseModel):
    images: list[dict]


class CreateSessionBody(BaseModel):
    experiment_id: str


_STATUS = {
    UnknownExperiment: 404,
    InsufficientImages: 409,
    DuplicateVote: 409,
    NoDecidedLabels: 409,
    BadLabel: 422,
}


def create_app(store: AnnotationStore | None = None) -> FastAPI:
    store = store if store is not None else AnnotationStore()
    app = FastAPI(title="pixelcause annotation service")
    app.state.store = store

    def annotator(authorization: str = Header(default="")) -> str:
        if not authorization.startswith("Bearer ") or not authorization[7:].strip():
            raise HTTPException(status_code=401, detail="bearer token required")
        return authorization[7:].strip()

    def run(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except AnnotationError as exc:
            raise HTTPException(
                status_code=_STATUS.get(type(exc), 400),
                detail={"error": type(exc).__name__, "message": str(exc)},
            )

    @app.post("/experiments")
    def create_experiment(body: CreateExperimentBody, _: str = Depends(annotator)):
        exp = run(
            store.create_experiment,
            body.experiment_id,
            body.alphabet,
            body.label_values,
            body.quorum,
            body.grid_rows,
            body.grid_cols,
            body.pages_per_session,
        )
        return {"experiment_id": exp.id, "session_size": exp.session_size}

    @app.post("/experiments/{experiment_id}/images")
    def add_images(
        experiment_id: str, body: AddImagesBody, _: str = Depends(annotator)
    ):
        ids = run(store.add_images, experiment_id, body.images)
        return {"image_ids": ids}

    @app.post("/sessions")
    def create_session(body: CreateSessionBody, who: str = Depends(annotator)):
        session = run(store.create_session, body.experiment_id, who)
        return {
            "session_id": session.id,
            "experiment_id": session.experiment_id,
            "num_pages": len(session.pages),
            "page_size": len(session.pages[0]) if session.pages else 0,
            "cursor": session.cursor,
        }

    @app.get("/sessions/{session_id}")
    def session_state(session_id: str, _: str = Depends(annotator)):
        session = run(store.get_session, session_id)
        return {
            "session_id": session.id,
            "experiment_id": session.experiment_id,
            "num_pages": len(session.pages),
            "cursor": session.cursor,
            "completed": session.completed,
        }

    @app.get("/sessions/{session_id}/pages/{page}")
    def get_page(session_id: str, page: int, _: str = Depends(annotator)):
        images = run(store.get_page, session_id, page)
        return {
            "images": [
                {"id": img.id, "side": img.side, "pixels_base64": img.pixels}
                for img in images
            ]
        }

    @app.post("/sessions/{session_id}/pages/{page}/labels")
    def submit_labels(
        session_id: str,
        page: int,
        labels: dict[str, str],
        _: str = Depends(annotator),
    ):
        recorded = run(store.submit_labels, session_id, page, labels)
        session = store.get_session(session_id)
        return {"recorded": recorded, "cursor": session.cursor}

    @app.get("/experiments/{experiment_id}/aggregate")
    def aggregate(experiment_id: str, _: str = Depends(annotator)):
        return {"labels": [a.to_dict() for a in run(store.aggregate, experiment_id)]}

    @app.post("/experiments/{experiment_id}/commit")
    def commit(experiment_id: str, _: str = Depends(annotator)):
        return run(store.commit, experiment_id)

    @app.post("/admin/snapshot")
    def snapshot(_: str = Depends(annotator)):
        store.snapshot()
        return {"ok": True}

    return app
