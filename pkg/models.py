from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, model_validator

# Experiment configs (config/*.yaml)

ExperimentKind = Literal["distance", "fold", "flare", "width", "pl-ball", "lift", "quasiconvexity", "hyperbolicity"]
LengthValue = Union[int, float, str]


class AutomorphismSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    images: List[str]
    inverse: List[str]


class GraphSpec(BaseModel):
    """A rose with petal lengths, or an edge list `[tail, head, length]` on numbered vertices."""

    model_config = ConfigDict(extra="forbid")

    rose: Optional[List[LengthValue]] = None
    vertices: Optional[int] = Field(None, ge=1)
    edges: Optional[List[Tuple[int, int, LengthValue]]] = None
    act: List[str] = Field(default_factory=list)
    normalize: bool = True

    @model_validator(mode="after")
    def _one_shape(self) -> "GraphSpec":
        if (self.rose is None) == (self.edges is None):
            raise ValueError("give exactly one of `rose` or `edges`")
        if self.edges is not None and self.vertices is None:
            raise ValueError("`edges` needs `vertices`")
        return self


class ExperimentParameters(BaseModel):
    model_config = ConfigDict(extra="forbid")

    classes: List[str] = Field(default_factory=lambda: ["a", "b", "ab"])
    powers: List[int] = Field(default_factory=lambda: [2, 4, 6, 8])
    radius: int = Field(3, ge=0)
    length_bound: int = Field(3, ge=1)
    dt: float = Field(1 / 64, gt=0)
    cap: Optional[int] = Field(None, ge=1)
    seed: Optional[int] = Field(None, ge=0)
    samples: int = Field(20, ge=0)
    source: Optional[str] = None
    target: Optional[str] = None
    alpha: Optional[str] = None
    beta: Optional[str] = None
    k: float = Field(0.0, ge=0)
    subgroup: List[str] = Field(default_factory=list)
    index_two: int = Field(0, ge=0)
    max_power: int = Field(12, ge=1)
    max_pairs: Optional[int] = Field(None, ge=1)
    scan_length: int = Field(3, ge=1)
    space: Literal["bundle", "pl", "edge-list"] = "bundle"
    edge_list: Optional[str] = None


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    name: str
    rank: int = Field(ge=1)
    experiment: ExperimentKind
    automorphisms: Dict[str, AutomorphismSpec] = Field(default_factory=dict)
    gamma: List[str] = Field(default_factory=list)
    graphs: Dict[str, GraphSpec] = Field(default_factory=dict)
    parameters: ExperimentParameters = Field(default_factory=ExperimentParameters)

    _node: Optional[yaml.Node] = PrivateAttr(default=None)
    _base_dir: Path = PrivateAttr(default_factory=Path)

    def attach_source(self, node: Optional[yaml.Node], base_dir: Path = Path(".")) -> "ExperimentConfig":
        self._node = node
        self._base_dir = base_dir
        return self

    @property
    def base_dir(self) -> Path:
        """Directory that relative paths in the config are resolved against."""
        return self._base_dir

    def position(self, *path: Union[str, int]) -> Tuple[Optional[int], Optional[int]]:
        return node_position(self._node, path)


def node_position(node: Optional[yaml.Node], path) -> Tuple[Optional[int], Optional[int]]:
    """1-based line and column of the deepest YAML node found along path."""
    if node is None:
        return None, None
    for part in path:
        child = None
        if isinstance(node, yaml.MappingNode):
            for key, value in node.value:
                if key.value == str(part):
                    child = value
                    break
        elif isinstance(node, yaml.SequenceNode) and isinstance(part, int) and part < len(node.value):
            child = node.value[part]
        if child is None:
            break
        node = child
    return node.start_mark.line + 1, node.start_mark.column + 1


# Reports

class Diagnostic(BaseModel):
    level: Literal["error", "warning"]
    message: str
    generator: Optional[str] = None
    line: Optional[int] = None
    column: Optional[int] = None


class ExperimentReport(BaseModel):
    rows: List[Dict[str, Any]] = Field(default_factory=list)
    summary: Dict[str, Any] = Field(default_factory=dict)
    exceeded: bool = False
    attachments: Dict[str, str] = Field(default_factory=dict)


class RunSummary(BaseModel):
    name: str
    experiment: ExperimentKind
    seed: int
    rows: int
    exceeded: bool
    outputs: List[str]
    summary: Dict[str, Any] = Field(default_factory=dict)


# Input/Output models for the geometry tools

class WordInput(BaseModel):
    word: str
    rank: Optional[int] = None

class ReduceOutput(BaseModel):
    word: Optional[str] = None
    length: Optional[int] = None
    error: Optional[str] = None

class CyclicReduceOutput(BaseModel):
    core: Optional[str] = None
    conjugator: Optional[str] = None
    error: Optional[str] = None

class RankedWordInput(BaseModel):
    word: str
    rank: int = Field(ge=1)

class DecisionOutput(BaseModel):
    result: Optional[bool] = None
    error: Optional[str] = None

class StallingsInput(BaseModel):
    generators: List[str]
    rank: int = Field(ge=1)

class StallingsOutput(BaseModel):
    index: Optional[int] = None
    vertices: Optional[int] = None
    subgroup_rank: Optional[int] = None
    error: Optional[str] = None

class RoseDistanceInput(BaseModel):
    source: List[LengthValue]
    target: List[LengthValue]
    twist: Optional[AutomorphismSpec] = None

class RoseDistanceOutput(BaseModel):
    distance: Optional[float] = None
    witness: Optional[str] = None
    error: Optional[str] = None

class FiberDistanceInput(BaseModel):
    rank: int = Field(ge=1)
    source: AutomorphismSpec
    target: AutomorphismSpec

class FiberDistanceOutput(BaseModel):
    distance: Optional[int] = None
    error: Optional[str] = None
