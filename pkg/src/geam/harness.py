"""The generation engine: cycles, ablation modes, configuration, artifacts.

One run proceeds as: label a block dataset, train the fragment scorer on it,
build the starting vocabulary, seed the replay with uniform-random episodes,
then loop generation cycles until the target number of oracle-charged
molecules is reached. A full cycle is one policy episode (plus a gradient
update), a population refresh over everything generated so far, one genetic
offspring, fragment extraction from that offspring, and a capped vocabulary
update. Ablation modes switch individual phases off:

  geam             full cycle
  geam-static      no extraction, vocabulary frozen after construction
  wo-assembly      no policy episodes; population seeded from the dataset
  wo-modification  no genetic phase, hence nothing to extract; frozen vocabulary
  random-assembly  episodes take uniform-random actions and never train

Runs are deterministic per seed: every stochastic component draws from its
own stream spawned off the run seed.
"""

from __future__ import annotations

import dataclasses
import json
import os
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from geam.assembly import (
    EpisodeResult,
    SacConfig,
    SacLearner,
    VocabCache,
    random_episode,
    rollout_episode,
    sac_update,
)
from geam.chem import write_smiles
from geam.datasets import (
    MOTIF_RING,
    SEED_SMILES,
    generate_block_dataset,
    label_dataset,
    read_dataset,
)
from geam.errors import (
    BudgetExceeded,
    ConfigError,
    PopulationTooSmall,
    ReproductionFailed,
)
from geam.fgib import FgibConfig, FragmentScorer, train_fgib
from geam.fingerprints import ecfp
from geam.fragment import extract_candidates
from geam.genetic import Population, reproduce
from geam.metrics import HitRule, MetricsReport, compute_metrics
from geam.oracles import (
    PropertyOracle,
    alkene_component,
    leanness_component,
    planted_motif_component,
    sa_component,
)
from geam.records import GenerationRecord, RecordWriter, record_from_result
from geam.vocab import (
    Vocabulary,
    build_vocab,
    random_vocab,
    update_vocab,
)

MODES = ("geam", "geam-static", "wo-assembly", "wo-modification", "random-assembly")


@dataclass
class DatasetConfig:
    size: int = 500
    motif: str = MOTIF_RING
    motif_rate: float = 0.5
    max_substituents: int = 2
    path: str | None = None  # overrides generation when set


@dataclass
class OracleConfig:
    motif: str = MOTIF_RING
    use_sa: bool = True
    use_alkene: bool = False
    use_lean: bool = False
    lean_soft: int = 40
    lean_hard: int = 80
    base: float = 0.1
    bonus: float = 0.8
    noise_sigma: float = 0.0
    count_cap: int = 1


@dataclass
class VocabConfig:
    top_k: int = 300
    capacity: int = 1000
    max_new_per_cycle: int = 50
    source: str = "fgib"  # fgib | random


@dataclass
class GaConfig:
    population_size: int = 100
    min_atoms: int = 15
    mutation_rate: float = 0.1
    offspring_per_cycle: int = 1
    resamples: int = 10


@dataclass
class MetricsConfig:
    hit_rules: list[str] = field(default_factory=lambda: ["y>=0.5"])
    novelty_threshold: float = 0.4
    circles_threshold: float = 0.75
    top_fraction: float = 0.05


@dataclass
class RunConfig:
    mode: str = "geam"
    seed: int = 0
    target: int = 3000
    seed_smiles: str = SEED_SMILES
    episode_log: bool = False
    # Safety valve: a collapsed policy can replay cached molecules forever
    # without charging the budget, so a run that goes this many consecutive
    # cycles without one new charged record stops early instead of spinning.
    stall_cycles: int = 1000
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    oracle: OracleConfig = field(default_factory=OracleConfig)
    vocab: VocabConfig = field(default_factory=VocabConfig)
    fgib: FgibConfig = field(default_factory=FgibConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    ga: GaConfig = field(default_factory=GaConfig)
    metrics: MetricsConfig = field(default_factory=MetricsConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; pick from {MODES}")
        if self.target < 1:
            raise ConfigError("target must be >= 1")
        if self.stall_cycles < 1:
            raise ConfigError("stall_cycles must be >= 1")
        if self.vocab.top_k > self.vocab.capacity:
            raise ConfigError("vocabulary top_k cannot exceed capacity")
        if self.vocab.source not in ("fgib", "random"):
            raise ConfigError(f"unknown vocab source {self.vocab.source!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        sections = {
            "dataset": DatasetConfig,
            "oracle": OracleConfig,
            "vocab": VocabConfig,
            "fgib": FgibConfig,
            "sac": SacConfig,
            "ga": GaConfig,
            "metrics": MetricsConfig,
        }
        kwargs: dict = {}
        for key, value in doc.items():
            if key in sections:
                section_cls = sections[key]
                names = {f.name for f in dataclasses.fields(section_cls)}
                unknown = set(value) - names
                if unknown:
                    raise ConfigError(
                        f"unknown keys in {key!r}: {sorted(unknown)}"
                    )
                kwargs[key] = section_cls(**value)
            elif key in {f.name for f in dataclasses.fields(cls)}:
                kwargs[key] = value
            else:
                raise ConfigError(f"unknown config key {key!r}")
        return cls(**kwargs)

    @classmethod
    def from_json_file(cls, path: str) -> "RunConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def apply_desk_profile(self) -> None:
        """Shrink the run to desk scale: short prefill, small target."""
        self.target = 500
        self.sac = dataclasses.replace(self.sac, prefill_steps=200)


def build_oracle(config: OracleConfig, budget: int | None, seed: int) -> PropertyOracle:
    components = [
        planted_motif_component(
            config.motif,
            base=config.base,
            bonus=config.bonus,
            noise_sigma=config.noise_sigma,
            seed=seed,
            count_cap=config.count_cap,
        )
    ]
    if config.use_sa:
        components.append(sa_component())
    if config.use_alkene:
        components.append(alkene_component(base=config.base, bonus=config.bonus))
    if config.use_lean:
        components.append(
            leanness_component(
                soft_atoms=config.lean_soft, hard_atoms=config.lean_hard
            )
        )
    return PropertyOracle(components, budget=budget)


@dataclass
class RunResult:
    config: RunConfig
    records: list[GenerationRecord]
    report: MetricsReport
    vocab_history: list[tuple[int, Vocabulary]]  # (cycle, snapshot) on change
    fgib_history: list[dict[str, float]]
    sac_losses: list[dict[str, float]]
    dataset_smiles: list[str]
    stop_reason: str = "target"  # target | budget | stalled


class GenerationEngine:
    """Owns all run state; dataset and oracles are injectable for tests."""

    def __init__(
        self,
        config: RunConfig,
        dataset: list[tuple] | None = None,
        oracle: PropertyOracle | None = None,
        dataset_oracle: PropertyOracle | None = None,
    ):
        self.config = config
        children = np.random.SeedSequence(config.seed).spawn(6)
        (
            self.dataset_rng,
            self.sac_rng,
            self.ga_rng,
            self.vocab_rng,
            self.prop_rng,
        ) = [np.random.default_rng(s) for s in children[:5]]
        self.fgib_seed = int(children[5].generate_state(1)[0])
        # The generation oracle is budgeted at the target; the dataset is
        # labeled by an unbudgeted twin so offline labels are free, matching
        # the pretrained-predictor setting.
        self.oracle = oracle or build_oracle(
            config.oracle, budget=config.target, seed=config.seed
        )
        self.dataset_oracle = dataset_oracle or build_oracle(
            config.oracle, budget=None, seed=config.seed
        )
        self._injected_dataset = dataset

        self.records: list[GenerationRecord] = []
        self._generated: list[tuple] = []  # (graph, y) alongside records
        self.vocab_history: list[tuple[int, Vocabulary]] = []
        self.fgib_history: list[dict[str, float]] = []
        self.sac_losses: list[dict[str, float]] = []
        self.episode_steps: list[dict] = []
        self._writer: RecordWriter | None = None

    # -- mode predicates ---------------------------------------------------

    @property
    def has_assembly(self) -> bool:
        return self.config.mode in (
            "geam", "geam-static", "wo-modification", "random-assembly"
        )

    @property
    def trains_policy(self) -> bool:
        return self.config.mode in ("geam", "geam-static", "wo-modification")

    @property
    def has_ga(self) -> bool:
        return self.config.mode in ("geam", "geam-static", "wo-assembly",
                                    "random-assembly")

    @property
    def updates_vocab(self) -> bool:
        return self.config.mode in ("geam", "wo-assembly", "random-assembly")

    # -- record plumbing ----------------------------------------------------

    def _charged_count(self) -> int:
        return sum(1 for r in self.records if r.charged)

    def _done(self) -> bool:
        return self._charged_count() >= self.config.target

    def _add_record(
        self, result, graph, cycle: int, provenance: str
    ) -> GenerationRecord:
        record = record_from_result(
            result,
            smiles=write_smiles(graph),
            ordinal=len(self.records) + 1,
            cycle=cycle,
            provenance=provenance,
            vocab_size=len(self.vocab),
        )
        self.records.append(record)
        self._generated.append((graph, result.y))
        if self._writer is not None:
            self._writer.write(record)
        return record

    def _log_episode(self, episode: EpisodeResult, cycle: int) -> None:
        if not self.config.episode_log:
            return
        for step, t in enumerate(episode.transitions):
            self.episode_steps.append(
                {
                    "cycle": cycle,
                    "step": step,
                    "smiles": write_smiles(t.next_state),
                    "reward": t.reward,
                    "provenance": "sac",
                }
            )

    # -- run ----------------------------------------------------------------

    def run(self, records_stream=None) -> RunResult:
        config = self.config
        if records_stream is not None:
            self._writer = RecordWriter(records_stream)

        if self._injected_dataset is not None:
            dataset = self._injected_dataset
        elif config.dataset.path is not None:
            dataset = read_dataset(config.dataset.path)
        else:
            mols = generate_block_dataset(
                config.dataset.size,
                self.dataset_rng,
                motif=config.dataset.motif,
                motif_rate=config.dataset.motif_rate,
                max_substituents=config.dataset.max_substituents,
            )
            dataset = label_dataset(mols, self.dataset_oracle)
        self.dataset = dataset

        model, self.fgib_history = train_fgib(
            dataset, config.fgib, seed=self.fgib_seed
        )
        self.fgib_model = model
        self.scorer = FragmentScorer(model)

        candidates = extract_candidates(dataset)
        if config.vocab.source == "random":
            self.vocab = random_vocab(
                candidates,
                self.vocab_rng,
                top_k=config.vocab.top_k,
                capacity=config.vocab.capacity,
            )
        else:
            self.vocab = build_vocab(
                candidates,
                self.scorer,
                top_k=config.vocab.top_k,
                capacity=config.vocab.capacity,
            )
        self.vocab_history.append((0, self.vocab))

        self.learner = (
            SacLearner(self.sac_rng, config.sac) if self.has_assembly else None
        )
        self._cache: VocabCache | None = None

        stop_reason = "target"
        try:
            if self._generate() == "stalled":
                stop_reason = "stalled"
        except BudgetExceeded:
            stop_reason = "budget"

        report = self.compute_report()
        return RunResult(
            config=config,
            records=self.records,
            report=report,
            vocab_history=self.vocab_history,
            fgib_history=self.fgib_history,
            sac_losses=self.sac_losses,
            dataset_smiles=[write_smiles(g) for g, _ in dataset],
            stop_reason=stop_reason,
        )

    def _fresh_cache(self) -> VocabCache:
        if self._cache is None or self._cache.vocab is not self.vocab:
            self._cache = VocabCache(self.learner.nets, self.vocab)
        return self._cache

    def _invalidate_cache(self) -> None:
        self._cache = None

    def _prefill(self) -> None:
        cfg = self.config
        steps = 0
        while steps < cfg.sac.prefill_steps and not self._done():
            episode = random_episode(
                self._fresh_cache(),
                self.oracle,
                self.sac_rng,
                n_sac=cfg.sac.n_sac,
                intermediate_reward=cfg.sac.intermediate_reward,
                seed_smiles=cfg.seed_smiles,
            )
            self.learner.buffer.extend(episode.transitions)
            steps += len(episode.transitions)
            self._add_record(episode.oracle_result, episode.final, 0, "prefill")
            self._log_episode(episode, 0)

    def _sac_phase(self, cycle: int) -> None:
        cfg = self.config
        if cfg.mode == "random-assembly":
            episode = random_episode(
                self._fresh_cache(),
                self.oracle,
                self.sac_rng,
                n_sac=cfg.sac.n_sac,
                intermediate_reward=cfg.sac.intermediate_reward,
                seed_smiles=cfg.seed_smiles,
            )
        else:
            episode = rollout_episode(
                self.learner.nets,
                self._fresh_cache(),
                self.oracle,
                self.sac_rng,
                n_sac=cfg.sac.n_sac,
                intermediate_reward=cfg.sac.intermediate_reward,
                seed_smiles=cfg.seed_smiles,
            )
        self.learner.buffer.extend(episode.transitions)
        self._add_record(episode.oracle_result, episode.final, cycle, "sac")
        self._log_episode(episode, cycle)
        if self.trains_policy and not self._done():
            for _ in range(cfg.sac.updates_per_episode):
                losses = sac_update(self.learner, self.vocab, self.sac_rng)
                if losses is not None:
                    self.sac_losses.append(losses)
            self._invalidate_cache()

    def _population_pool(self) -> list[tuple]:
        if self.config.mode == "wo-assembly":
            return [(graph, y) for graph, y in self.dataset] + self._generated
        return list(self._generated)

    def _ga_phase(self, cycle: int) -> list[tuple]:
        cfg = self.config
        offspring: list[tuple] = []
        population = Population.from_entries(
            self._population_pool(), size=cfg.ga.population_size
        )
        for _ in range(cfg.ga.offspring_per_cycle):
            if self._done():
                break
            try:
                child, result = reproduce(
                    population,
                    self.oracle,
                    self.ga_rng,
                    min_atoms=cfg.ga.min_atoms,
                    resamples=cfg.ga.resamples,
                    mutation_rate=cfg.ga.mutation_rate,
                )
            except (PopulationTooSmall, ReproductionFailed):
                break
            offspring.append((child, result.y))
            self._add_record(result, child, cycle, "ga")
        return offspring

    def _extraction_phase(self, offspring: list[tuple], cycle: int) -> None:
        if not offspring or not self.updates_vocab:
            return
        candidates = extract_candidates(offspring)
        new_vocab, admitted = update_vocab(
            self.vocab,
            candidates,
            self.scorer,
            max_new=self.config.vocab.max_new_per_cycle,
        )
        if admitted > 0 or len(new_vocab) != len(self.vocab):
            self.vocab = new_vocab
            self.vocab_history.append((cycle, new_vocab))
            self._invalidate_cache()

    def _generate(self) -> str:
        if self.has_assembly:
            self._prefill()
        cycle = 0
        stalled = 0
        charged = self._charged_count()
        while not self._done():
            cycle += 1
            if self.has_assembly:
                self._sac_phase(cycle)
                if self._done():
                    break
            if self.has_ga:
                offspring = self._ga_phase(cycle)
                if self.updates_vocab:
                    self._extraction_phase(offspring, cycle)
                if self._done():
                    break
            if not self.has_assembly and not self.has_ga:
                raise ConfigError(f"mode {self.config.mode!r} generates nothing")
            now = self._charged_count()
            if now == charged:
                stalled += 1
                if stalled >= self.config.stall_cycles:
                    return "stalled"
            else:
                stalled = 0
                charged = now
        return "target"

    # -- reporting -----------------------------------------------------------

    def hit_rules(self) -> list[HitRule]:
        return [HitRule.parse(t) for t in self.config.metrics.hit_rules]

    def compute_report(self) -> MetricsReport:
        reference = [ecfp(graph) for graph, _ in self.dataset]
        return compute_metrics(
            self.records,
            reference,
            self.hit_rules(),
            primary=self.oracle.primary.name,
            maximize=self.oracle.primary.maximize,
            novelty_threshold=self.config.metrics.novelty_threshold,
            circles_threshold=self.config.metrics.circles_threshold,
            top_fraction=self.config.metrics.top_fraction,
        )


def run_experiment(
    config: RunConfig,
    out_dir: str | None = None,
    dataset: list[tuple] | None = None,
    oracle: PropertyOracle | None = None,
    render: bool = True,
) -> RunResult:
    """Run one configured experiment, optionally writing all artifacts."""
    engine = GenerationEngine(config, dataset=dataset, oracle=oracle)
    if out_dir is None:
        return engine.run()

    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "config.json"), "w") as fh:
        json.dump(config.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(os.path.join(out_dir, "records.jsonl"), "w") as fh:
        result = engine.run(records_stream=fh)

    with open(os.path.join(out_dir, "metrics.json"), "w") as fh:
        fh.write(result.report.to_json() + "\n")
    with open(os.path.join(out_dir, "metrics.csv"), "w") as fh:
        fh.write(result.report.to_csv())

    vocab_dir = os.path.join(out_dir, "vocab")
    os.makedirs(vocab_dir, exist_ok=True)
    for cycle, vocab in result.vocab_history:
        vocab.to_jsonl(os.path.join(vocab_dir, f"cycle_{cycle:05d}.jsonl"))

    with open(os.path.join(out_dir, "reference.smi"), "w") as fh:
        for smiles in result.dataset_smiles:
            fh.write(smiles + "\n")

    if config.episode_log:
        with open(os.path.join(out_dir, "episodes.jsonl"), "w") as fh:
            for step in engine.episode_steps:
                fh.write(json.dumps(step, sort_keys=True) + "\n")

    if render:
        from geam.report import render_run_figures

        render_run_figures(result, out_dir)
    return result
