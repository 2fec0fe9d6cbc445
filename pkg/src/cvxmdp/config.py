"""
Experiment configuration files.

INI-style text with the sections below; vectors are whitespace separated,
matrix rows are separated by `;`.

    [environment]  kind = known | lowrank | knr, plus instance keys
    [objective]    kind = linear | dist_point | dist_ball, vector or target
    [constraint]   optional, same keys as [objective]
    [algorithm]    T, delta, Gamma, schedule, truth_mode, ...
    [sweep]        seeds, T
    [output]       dir, name, emit_plots
"""

import configparser

import numpy as np
import numpy.typing as npt

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

from cvxmdp.errors import ConfigurationError
from cvxmdp.mdp_embedding import FeatureMap, FiniteModel, policy_embedding
from cvxmdp.mdp_fenchel import ConvexOracle, make_oracle
from cvxmdp.mdp_knr import KnrTruth, StateActionFeature, StateGrid
from cvxmdp.mdp_lowrank import ModelClass
from cvxmdp.mdp_policy import StagePolicy
from cvxmdp.mdp_vpdpo import ExperimentSpec, KnownEnvironment, KnrEnvironment, LowRankEnvironment

SECTIONS = ("environment", "objective", "constraint", "algorithm", "sweep", "output")


def parse_vector(text: str) -> npt.NDArray[np.float64]:
    return np.array([float(tok) for tok in text.split()])


def parse_ints(text: str) -> list[int]:
    return [int(tok) for tok in text.split()]


def parse_matrix(text: str) -> npt.NDArray[np.float64]:
    rows = [parse_vector(row) for row in text.split(";") if row.strip()]
    if len({row.shape[0] for row in rows}) != 1:
        raise ValueError("matrix rows have different lengths")
    return np.vstack(rows)


def _bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


@dataclass()
class RunConfig:
    """
    Parsed configuration: a recipe that builds an ExperimentSpec per seed.

    Attributes:
        parser: Validated key/value sections
        seeds: Seeds to run
        T_values: Episode counts to run
        out_dir: Output directory
        emit_plots: Write gnuplot data and scripts next to the CSVs
        name: Experiment label
        source: File the configuration came from
    """

    parser: configparser.ConfigParser = field(repr=False)
    seeds: list[int]
    T_values: list[int]
    out_dir: Path
    emit_plots: bool = False
    name: str = "experiment"
    source: Path | None = None

    def __post_init__(self) -> None:
        if not self.seeds:
            raise ConfigurationError("sweep.seeds: the seed list is empty")
        if any(T < 1 for T in self.T_values):
            raise ConfigurationError(f"sweep.T: every T must be >= 1, got {self.T_values}")

    def get(
        self, section: str, key: str, cast: Callable[[str], Any] = str, default: Any = ...
    ) -> Any:
        """Typed lookup; failures name `section.key`."""
        if not self.parser.has_option(section, key):
            if default is ...:
                raise ConfigurationError(f"{section}.{key}: missing required key")
            return default
        raw = self.parser.get(section, key)
        try:
            return cast(raw)
        except (ValueError, TypeError) as e:
            raise ConfigurationError(f"{section}.{key}: cannot parse {raw!r} ({e})") from e

    def build(self, seed: int, T: int | None = None) -> ExperimentSpec:
        """Instance draws default to the run seed unless the file pins their seeds."""
        env, truth_model, features = self._environment(seed)
        f = self._oracle("objective", truth_model, features)
        g = self._oracle("constraint", truth_model, features) if self.parser.has_section("constraint") else None

        get = self.get
        try:
            return ExperimentSpec(
                env,
                f,
                g,
                Gamma=get("algorithm", "Gamma", float, 1.0),
                T=T if T is not None else self.T_values[0],
                delta=get("algorithm", "delta", float, 0.1),
                schedule=get("algorithm", "schedule", str, "anytime"),
                seed=seed,
                truth_mode=get("algorithm", "truth_mode", str, "auto"),
                truth_tol=get("algorithm", "truth_tol", float, 1e-7),
                eps_gamma=get("algorithm", "eps_gamma", float, 1e-8),
                log_every=get("algorithm", "log_every", int, 100),
                name=self.name,
            )
        except ConfigurationError as e:
            raise ConfigurationError(f"algorithm: {e}") from e

    def _environment(self, seed: int):
        get = self.get
        kind = get("environment", "kind")
        instance_seed = get("environment", "instance_seed", int, seed)
        rng = np.random.default_rng(instance_seed)

        match kind:
            case "known":
                if self.parser.has_option("environment", "model_file"):
                    path = Path(get("environment", "model_file"))
                    if self.source is not None and not path.is_absolute():
                        path = self.source.parent / path
                    try:
                        model = FiniteModel.load(path)
                    except OSError as e:
                        raise ConfigurationError(
                            f"environment.model_file: cannot read {str(path)!r} ({e.strerror})"
                        ) from e
                    except ConfigurationError as e:
                        raise ConfigurationError(f"environment.model_file: {e}") from e
                else:
                    model = FiniteModel.random(
                        get("environment", "states", int),
                        get("environment", "actions", int),
                        get("environment", "horizon", int),
                        rng,
                        get("environment", "concentration", float, 1.0),
                    )
                features = FeatureMap.tabular_onehot(
                    model.num_states, model.num_actions, model.horizon
                )
                return KnownEnvironment(model, features), model, features

            case "lowrank":
                S = get("environment", "states", int)
                A = get("environment", "actions", int)
                H = get("environment", "horizon", int)
                if get("environment", "class", str, "factors") == "perturbed":
                    base = FiniteModel.random(S, A, H, rng)
                    models = ModelClass.perturbed(
                        base,
                        get("environment", "class_size", int, 6),
                        get("environment", "perturbation", float, 0.3),
                        instance_seed,
                    )
                else:
                    models = ModelClass.random(
                        S,
                        A,
                        H,
                        get("environment", "rank", int, 2),
                        get("environment", "n_theta", int, 2),
                        get("environment", "n_upsilon", int, 3),
                        instance_seed,
                    )
                features = FeatureMap.tabular_onehot(S, A, H)
                env = LowRankEnvironment(
                    models,
                    features,
                    get("environment", "c", float, 2.0),
                    get("environment", "planner", str, "factored"),
                    get("environment", "budget", int, 10**4),
                )
                return env, models.truth, features

            case "knr":
                phi = StateActionFeature(
                    get("environment", "feature", str, "identity"),
                    get("environment", "state_dim", int),
                    get("environment", "actions", int),
                    get("environment", "feature_dim", int, 0),
                    get("environment", "feature_seed", int, instance_seed),
                )
                H = get("environment", "horizon", int)
                sigma = get("environment", "sigma", float, 0.1)
                s0 = get("environment", "initial_state", parse_vector, np.zeros(phi.state_dim))
                if self.parser.has_option("environment", "W"):
                    truth = KnrTruth(get("environment", "W", parse_matrix), phi, sigma, H, s0)
                else:
                    truth = KnrTruth.random(phi, sigma, H, instance_seed, initial_state=s0)
                grid = StateGrid.auto(s0, sigma, H, get("environment", "grid_nodes", int, None))
                features = phi.as_feature_map(H)
                env = KnrEnvironment(
                    truth,
                    features,
                    get("environment", "lam", float, None),
                    get("environment", "kappa", float, 1.0),
                    grid,
                    get("environment", "rollouts", int, 2000),
                    get("environment", "truth_rollouts", int, 10**5),
                )
                model, grid_features = env.reference()
                return env, model, grid_features

            case _:
                raise ConfigurationError(
                    f"environment.kind: expected known, lowrank or knr, got {kind!r}"
                )

    def _oracle(self, section: str, model: FiniteModel, features: FeatureMap) -> ConvexOracle:
        """`vector` gives the oracle vector; `target = uniform` uses the uniform policy's embedding."""
        kind = self.get(section, "kind")
        if self.parser.has_option(section, "vector"):
            vector = self.get(section, "vector", parse_vector)
        else:
            target = self.get(section, "target", str, "uniform")
            if target != "uniform":
                raise ConfigurationError(f"{section}.target: only 'uniform' is supported, got {target!r}")
            policy = StagePolicy.uniform(model.horizon, model.num_states, model.num_actions)
            vector = policy_embedding(policy, model, features).vector

        expected = features.horizon * features.dim
        if vector.shape[0] != expected:
            raise ConfigurationError(
                f"{section}.vector: length {vector.shape[0]}, expected H*d = {expected}"
            )
        scalar_key = "radius" if kind == "dist_ball" else "offset"
        scalar = self.get(section, scalar_key, float, 0.0)
        try:
            return make_oracle(kind, vector, scalar)
        except ValueError as e:
            raise ConfigurationError(f"{section}.kind: {e}") from e


def load_config(path: str | Path) -> RunConfig:
    """Parse and validate a configuration file."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.optionxform = str  # keys are case-sensitive (Gamma, W, T)
    try:
        with path.open(encoding="utf-8") as handle:
            parser.read_file(handle)
    except FileNotFoundError as e:
        raise ConfigurationError(f"{path}: file not found") from e
    except configparser.MissingSectionHeaderError as e:
        raise ConfigurationError(f"{path}:{e.lineno}: expected a [section] header") from e
    except configparser.ParsingError as e:
        line, text = e.errors[0]
        raise ConfigurationError(f"{path}:{line}: cannot parse {text.strip()!r}") from e
    except configparser.Error as e:
        raise ConfigurationError(f"{path}: {e}") from e

    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigurationError(f"{path}: unknown section [{section}]")
    for section in ("environment", "objective"):
        if not parser.has_section(section):
            raise ConfigurationError(f"{path}: missing section [{section}]")

    draft = RunConfig(parser, [0], [1], Path("."))
    default_T = draft.get("algorithm", "T", int, 100)
    config = RunConfig(
        parser,
        draft.get("sweep", "seeds", parse_ints, [0]),
        draft.get("sweep", "T", parse_ints, [default_T]),
        Path(draft.get("output", "dir", str, "results")),
        draft.get("output", "emit_plots", _bool, False),
        draft.get("output", "name", str, path.stem),
        path,
    )
    config.build(config.seeds[0])
    return config
