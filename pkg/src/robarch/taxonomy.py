"""Mixture-weight taxonomy and network export.

Records are labeled from their alpha rows with a dominance threshold U in
(0.5, 1]: pure(j) when alpha_ij >= U (takes precedence), pair(j, l) when
exactly one pair sum reaches U, mixture when two or more pairs reach it,
unassigned otherwise.  Exactly one label per record.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from itertools import combinations

import numpy as np
import pandas as pd

from .archetypes import ArchetypalModel
from .errors import InputError


@dataclass(frozen=True)
class TaxonomyConfig:
    threshold: float = 0.8

    def __post_init__(self):
        if not 0.5 < self.threshold <= 1.0:
            raise InputError("threshold must lie in (0.5, 1]")


@dataclass(frozen=True)
class ClusterAssignment:
    kind: str                      # pure | pair | mixture | unassigned
    archetypes: tuple[int, ...]    # (j,) for pure, (j, l) for pair, else ()

    def label(self) -> str:
        if self.kind in ("pure", "pair"):
            inner = ",".join(str(j) for j in self.archetypes)
            return f"{self.kind}({inner})"
        return self.kind


def _check_alpha(alpha) -> np.ndarray:
    alpha = np.asarray(alpha, dtype=float)
    if alpha.ndim != 2 or alpha.shape[0] == 0:
        raise InputError("alpha must be a nonempty 2-d array")
    if alpha.min() < -1e-6 or np.abs(alpha.sum(axis=1) - 1.0).max() > 1e-6:
        raise InputError("alpha rows must lie on the simplex")
    return alpha


def assign_clusters(alpha, config: TaxonomyConfig | None = None) -> list[ClusterAssignment]:
    """One taxonomy label per alpha row."""
    config = config or TaxonomyConfig()
    alpha = _check_alpha(alpha)
    U = config.threshold
    k = alpha.shape[1]
    out = []
    for row in alpha:
        top = int(np.argmax(row))
        if row[top] >= U:
            out.append(ClusterAssignment("pure", (top,)))
            continue
        reached = [
            (j, l) for j, l in combinations(range(k), 2) if row[j] + row[l] >= U
        ]
        if len(reached) == 1:
            out.append(ClusterAssignment("pair", reached[0]))
        elif reached:
            out.append(ClusterAssignment("mixture", ()))
        else:
            out.append(ClusterAssignment("unassigned", ()))
    return out


def sector_weights(alpha, sectors) -> pd.DataFrame:
    """Per-sector alpha mass, each sector row normalized to sum one."""
    alpha = _check_alpha(alpha)
    sectors = [str(s) for s in sectors]
    if len(sectors) != alpha.shape[0]:
        raise InputError("sectors length must match alpha rows")
    if not sectors:
        raise InputError("no records to aggregate")
    frame = pd.DataFrame(alpha, columns=[f"A{j + 1}" for j in range(alpha.shape[1])])
    frame["sector"] = sectors
    sums = frame.groupby("sector", sort=True).sum()
    return sums.div(sums.sum(axis=1), axis=0)


def assignments_frame(assignments, labels=None, sectors=None) -> pd.DataFrame:
    """Tabular view of assignments for CSV emission."""
    n = len(assignments)
    data = {
        "record": labels if labels is not None else [str(i) for i in range(n)],
        "kind": [a.kind for a in assignments],
        "archetypes": [
            ";".join(str(j + 1) for j in a.archetypes) for a in assignments
        ],
    }
    if sectors is not None:
        data["sector"] = list(sectors)
    return pd.DataFrame(data)


def _node_names(model: ArchetypalModel, labels) -> list[str]:
    if labels is None:
        return [str(i) for i in range(model.n_cases)]
    if len(labels) != model.n_cases:
        raise InputError("labels length must match the model's case count")
    return [str(x) for x in labels]


def export_network(assignments, model: ArchetypalModel, sectors, path,
                   fmt: str = "dot", labels=None) -> None:
    """Write the cluster network as DOT or JSON.

    Nodes are records, annotated with sector, label kind and an
    archetypoid flag; pure records get one edge to their archetypoid, pair
    records one edge to each of the two; mixture and unassigned records
    carry the annotation only.  Archetype j's node is its member record
    when the model has member_indices, a synthetic node otherwise.
    """
    if len(assignments) != model.n_cases:
        raise InputError("assignments length must match the model")
    sectors = [str(s) for s in sectors]
    if len(sectors) != model.n_cases:
        raise InputError("sectors length must match the model")
    names = _node_names(model, labels)

    if model.member_indices is not None:
        anchor = {j: names[idx] for j, idx in enumerate(model.member_indices)}
        synthetic = []
    else:
        anchor = {j: f"archetype_{j + 1}" for j in range(model.k)}
        synthetic = list(anchor.values())

    member_set = set(model.member_indices or [])
    nodes = [
        {
            "id": names[i],
            "sector": sectors[i],
            "label": assignments[i].label(),
            "archetypoid": i in member_set,
        }
        for i in range(model.n_cases)
    ]
    nodes += [
        {"id": name, "sector": "", "label": "archetype", "archetypoid": True}
        for name in synthetic
    ]
    edges = []
    for i, assignment in enumerate(assignments):
        for j in assignment.archetypes:
            if anchor[j] != names[i]:
                edges.append((names[i], anchor[j]))

    if fmt == "json":
        payload = {
            "nodes": nodes,
            "edges": [{"source": a, "target": b} for a, b in edges],
        }
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    elif fmt == "dot":
        lines = ["graph clusters {"]
        for node in nodes:
            attrs = ", ".join(
                f'{key}="{node[key]}"' for key in ("sector", "label")
            )
            flag = ", archetypoid=true" if node["archetypoid"] else ""
            lines.append(f'  "{node["id"]}" [{attrs}{flag}];')
        for a, b in edges:
            lines.append(f'  "{a}" -- "{b}";')
        lines.append("}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    else:
        raise InputError(f"unknown network format {fmt!r}")
