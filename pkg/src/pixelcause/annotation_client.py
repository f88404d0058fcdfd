"""Client-side plumbing that turns the annotation service into a causal oracle.

The oracle enqueues a batch of images, hands control to a callback that gets
the images annotated (scripted voters in tests, humans in a live deployment),
then commits and reads the decided label values back in order.  Labels travel
as symbols; the experiment's symbol-to-value map converts them to causal
probabilities, so a voter population that emulates the synthetic oracle yields
bit-identical pipeline metrics.
"""

from __future__ import annotations

import uuid
from typing import Callable, Sequence

import httpx
import numpy as np

from .errors import ConfigError
from .storage import pack_pixels, unpack_pixels


def _auth(token: str) -> dict[str, str]:
    return {"Authorization": f"Bearer {token}"}


class AnnotationServiceClient:
    """Thin typed wrapper over the HTTP API."""

    def __init__(self, http: httpx.Client, token: str):
        self.http = http
        self.token = token

    def _check(self, response: httpx.Response) -> dict:
        if response.status_code >= 400:
            raise ConfigError(f"service error {response.status_code}: {response.text}")
        return response.json()

    def create_experiment(self, experiment_id: str, alphabet, label_values, **kwargs) -> dict:
        body = {
            "experiment_id": experiment_id,
            "alphabet": list(alphabet),
            "label_values": dict(label_values),
            **kwargs,
        }
        return self._check(
            self.http.post("/experiments", json=body, headers=_auth(self.token))
        )

    def add_images(self, experiment_id: str, grids: Sequence[np.ndarray]) -> list[str]:
        images = [
            {
                "id": uuid.uuid4().hex,
                "pixels": pack_pixels(np.asarray(g)),
                "side": int(np.asarray(g).shape[0]),
            }
            for g in grids
        ]
        doc = self._check(
            self.http.post(
                f"/experiments/{experiment_id}/images",
                json={"images": images},
                headers=_auth(self.token),
            )
        )
        return doc["image_ids"]

    def create_session(self, experiment_id: str, token: str | None = None) -> dict:
        return self._check(
            self.http.post(
                "/sessions",
                json={"experiment_id": experiment_id},
                headers=_auth(token or self.token),
            )
        )

    def get_page(self, session_id: str, page: int, token: str | None = None) -> list[dict]:
        doc = self._check(
            self.http.get(
                f"/sessions/{session_id}/pages/{page}",
                headers=_auth(token or self.token),
            )
        )
        return doc["images"]

    def submit_labels(
        self, session_id: str, page: int, labels: dict[str, str], token: str | None = None
    ) -> dict:
        return self._check(
            self.http.post(
                f"/sessions/{session_id}/pages/{page}/labels",
                json=labels,
                headers=_auth(token or self.token),
            )
        )

    def aggregate(self, experiment_id: str) -> list[dict]:
        doc = self._check(
            self.http.get(
                f"/experiments/{experiment_id}/aggregate", headers=_auth(self.token)
            )
        )
        return doc["labels"]

    def commit(self, experiment_id: str) -> dict:
        return self._check(
            self.http.post(
                f"/experiments/{experiment_id}/commit", headers=_auth(self.token)
            )
        )


def run_scripted_voter(
    client: AnnotationServiceClient,
    token: str,
    experiment_id: str,
    vote_fn: Callable[[np.ndarray], str],
) -> int:
    """Complete one whole session as a deterministic annotator: fetch every
    page, vote ``vote_fn(grid)`` on every image, submit.  Returns the number
    of votes cast."""
    session = client.create_session(experiment_id, token=token)
    votes = 0
    for page in range(session["num_pages"]):
        images = client.get_page(session["session_id"], page, token=token)
        labels = {
            img["id"]: vote_fn(unpack_pixels(img["pixels_base64"], img["side"]))
            for img in images
        }
        client.submit_labels(session["session_id"], page, labels, token=token)
        votes += len(labels)
    return votes


class AnnotationOracle:
    """Causal oracle backed by the annotation service.

    ``annotate_callback(image_ids)`` must get the enqueued images voted to
    quorum (e.g. by driving scripted voters); afterwards the oracle commits
    and returns the decided values in enqueue order.
    """

    def __init__(
        self,
        client: AnnotationServiceClient,
        experiment_id: str,
        annotate_callback: Callable[[list[str]], None],
    ):
        self.client = client
        self.experiment_id = experiment_id
        self.annotate_callback = annotate_callback
        self._count = 0

    @property
    def query_count(self) -> int:
        return self._count

    def query(self, image) -> float:
        return self.query_batch([image])[0]

    def query_batch(self, images: Sequence[np.ndarray]) -> list[float]:
        ids = self.client.add_images(self.experiment_id, images)
        self.annotate_callback(ids)
        delta = self.client.commit(self.experiment_id)
        decided = {rec["image_id"]: rec["label_value"] for rec in delta["records"]}
        missing = [iid for iid in ids if iid not in decided]
        if missing:
            raise ConfigError(
                f"{len(missing)} enqueued images were not decided by the annotators"
            )
        self._count += len(ids)
        return [float(decided[iid]) for iid in ids]
