"""
Simulation service: Monte-Carlo BER sweeps, CM sweeps and instrumented audits.
"""
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from ..core.config import get_settings
from ..core.exceptions import NumericalSingularityError, OtfsSimException, SimulationError
from ..core.logging import LoggerMixin, get_logger
from ..models.requests import AuditRequest, ComplexityRequest, ReceiverKind, SimConfig
from ..models.responses import AuditReport, BerPoint, BerSweepResponse, ComplexityReport, ComplexityRow
from .channel import (
    DdChannel,
    NoiseModel,
    PowerDelayProfile,
    add_awgn,
    apply_channel,
    apply_channel_with_cp,
    build_channel_from_profile,
    delay_length,
    doppler_length,
    load_profile,
    max_doppler,
)
from .complexity import CmCounter, CmFormula, audit_run, audit_to_frame, formula_direct, formula_table2_proposed
from .dd_core import BitArray, DdFrame, OtfsGrid, get_constellation, qam_demap_hard, qam_map
from .equalizer import LmmseFastReceiver
from .modem import CpConfig, ModulationScheme, SchemeKind, add_cp, remove_cp
from .oracle import DenseLmmseReceiver

logger = get_logger(__name__)

BER_COLUMNS = ["snr_db", "ber", "bit_errors", "bits_total", "frames", "receiver", "scheme"]
COMPLEXITY_COLUMNS = ["profile", "scheme", "m", "n", "alpha", "beta", "p", "direct_cm", "proposed_cm", "ratio"]


@dataclass(frozen=True, eq=False)
class FrameOutcome:
    frame_index: int
    bit_errors: int
    bits_total: int
    decided: BitArray
    attempts: int


def frame_seed(master_seed: int, frame_index: int) -> int:
    return master_seed ^ frame_index


def _noise_seed(seed: int) -> int:
    return int(np.random.SeedSequence([seed, 2]).generate_state(1)[0])


def noise_variance(snr_db: float, cfg: SimConfig, ch: DdChannel) -> float:
    """sigma_n^2 for sigma_d^2 = 1; optionally charges the CP energy to the SNR."""
    sigma_sq = 10.0 ** (-snr_db / 10.0)
    if cfg.snr_includes_cp:
        mn = ch.grid.mn
        sigma_sq *= (mn + ch.alpha - 1) / mn
    return sigma_sq


def _transmit(s: np.ndarray, ch: DdChannel, noise: NoiseModel, use_cp: bool) -> np.ndarray:
    if not use_cp:
        return add_awgn(apply_channel(s, ch), noise)
    cp = CpConfig.for_channel(ch)
    received = apply_channel_with_cp(add_cp(s, cp), ch, cp.cp_len)
    return remove_cp(add_awgn(received, noise), cp)


def simulate_frame(
    cfg: SimConfig,
    profile: PowerDelayProfile,
    snr_db: float,
    frame_index: int,
    max_retries: Optional[int] = None
) -> FrameOutcome:
    """Run one frame end to end.

    The channel, bit and noise streams depend only on (seed, frame_index), so
    every SNR point sees the same channel ensemble and payload.
    """
    if max_retries is None:
        max_retries = get_settings().max_frame_retries
    grid = cfg.grid
    constellation = get_constellation(cfg.qam_order)
    scheme = ModulationScheme(kind=cfg.scheme, grid=grid)
    seed = frame_seed(cfg.seed, frame_index)

    bits = np.random.default_rng([seed, 1]).integers(0, 2, size=grid.mn * constellation.bits_per_symbol, dtype=np.int8)
    frame = DdFrame.from_vector(grid, qam_map(bits, constellation))
    s = scheme.modulate(frame)

    for attempt in range(max_retries + 1):
        ch = build_channel_from_profile(
            profile, cfg.speed_mps, cfg.fc_hz, grid, seed=np.random.default_rng([seed, attempt, 0])
        )
        sigma_sq = noise_variance(snr_db, cfg, ch)
        rx = _transmit(s, ch, NoiseModel(sigma_n_sq=sigma_sq, rng_seed=_noise_seed(seed)), cfg.use_cp)
        try:
            if cfg.receiver is ReceiverKind.DENSE:
                nsr = max(sigma_sq, get_settings().nsr_floor)
                estimate = DenseLmmseReceiver(ch, nsr, scheme).equalize(rx)
            else:
                estimate = LmmseFastReceiver(ch, sigma_sq, scheme).equalize(rx)
        except NumericalSingularityError as e:
            logger.warning(f"Frame {frame_index} at {snr_db} dB: singular system on attempt {attempt}, redrawing channel ({e.message})")
            continue
        decided = qam_demap_hard(estimate.vector, constellation)
        return FrameOutcome(
            frame_index=frame_index,
            bit_errors=int(np.count_nonzero(decided != bits)),
            bits_total=int(bits.size),
            decided=decided,
            attempts=attempt + 1
        )

    raise SimulationError(
        f"Frame {frame_index} stayed singular after {max_retries + 1} channel draws",
        details={"frame_index": frame_index, "snr_db": snr_db}
    )


def _simulate_frame_task(args: Tuple[SimConfig, PowerDelayProfile, float, int, int]) -> FrameOutcome:
    return simulate_frame(*args)


class SimulationService(LoggerMixin):
    """Harness front-end shared by the CLI and the HTTP API."""

    def __init__(self, workers: Optional[int] = None):
        self.settings = get_settings()
        self.workers = workers or self.settings.workers

    def run_ber_sweep(self, cfg: SimConfig) -> BerSweepResponse:
        """
        Monte-Carlo BER over cfg.snr_db.

        Frames may be spread over a process pool; counts are merged by
        summation so the result does not depend on the worker count.
        """
        start_time = time.time()
        try:
            profile = load_profile(cfg.profile, self.settings.profile_dir)
            self.logger.info(
                f"BER sweep: {cfg.scheme.value}/{cfg.receiver.value}, {cfg.m}x{cfg.n}, "
                f"profile={profile.name}, {len(cfg.snr_db)} SNR points x {cfg.frames} frames"
            )
            points: List[BerPoint] = []
            progress = tqdm(cfg.snr_db, desc="SNR points", unit="pt", disable=not self.settings.show_progress)
            for snr_db in progress:
                outcomes = self._run_frames(cfg, profile, snr_db)
                errors = sum(o.bit_errors for o in outcomes)
                total = sum(o.bits_total for o in outcomes)
                point = BerPoint.from_counts(snr_db, errors, total, len(outcomes))
                self.logger.info(f"SNR {snr_db:g} dB: BER={point.ber:.3e} ({errors}/{total})")
                points.append(point)
        except OtfsSimException:
            raise
        except Exception as e:
            self.logger.error(f"BER sweep failed: {str(e)}")
            raise SimulationError(
                message=f"Failed to run BER sweep: {str(e)}",
                details={"scheme": cfg.scheme.value, "receiver": cfg.receiver.value}
            )

        csv_filename = None
        if cfg.output:
            csv_filename = self.export_ber_csv(points, cfg, cfg.output)

        grid = cfg.grid
        self.logger.info(f"BER sweep finished in {time.time() - start_time:.2f}s")
        return BerSweepResponse(
            scheme=cfg.scheme.value,
            receiver=cfg.receiver.value,
            points=points,
            csv_filename=csv_filename,
            metadata={
                "grid": {"m": grid.m, "n": grid.n, "delta_f": grid.delta_f},
                "profile": profile.name,
                "speed_kmh": cfg.speed_kmh,
                "fc_hz": cfg.fc_hz,
                "qam_order": cfg.qam_order,
                "snr_convention": "Es/N0 per QAM symbol" + (", CP energy included" if cfg.snr_includes_cp else ""),
                "use_cp": cfg.use_cp,
                "seed": cfg.seed,
            }
        )

    def _run_frames(self, cfg: SimConfig, profile: PowerDelayProfile, snr_db: float) -> List[FrameOutcome]:
        retries = self.settings.max_frame_retries
        tasks = [(cfg, profile, snr_db, idx, retries) for idx in range(cfg.frames)]
        if self.workers <= 1 or cfg.frames == 1:
            return [_simulate_frame_task(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            return list(pool.map(_simulate_frame_task, tasks))

    def export_ber_csv(self, points: List[BerPoint], cfg: SimConfig, path: str) -> str:
        df = pd.DataFrame(
            [
                {
                    "snr_db": p.snr_db, "ber": p.ber, "bit_errors": p.bit_errors,
                    "bits_total": p.bits_total, "frames": p.frames,
                    "receiver": cfg.receiver.value, "scheme": cfg.scheme.value
                }
                for p in points
            ],
            columns=BER_COLUMNS
        )
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        df.to_csv(path, index=False)
        self.logger.info(f"BER curve written to {path}")
        return str(path)

    def run_complexity_report(self, request: ComplexityRequest) -> ComplexityReport:
        """Direct vs proposed LMMSE CMs for M = 2, 4, ..., m_max."""
        profile = load_profile(request.profile, self.settings.profile_dir)
        nu_max = max_doppler(request.speed_mps, request.fc_hz)
        rows: List[ComplexityRow] = []
        max_ratio: Dict[str, float] = {}

        m_values = [1 << e for e in range(1, request.m_max.bit_length())]
        for scheme in (SchemeKind.OTFS, SchemeKind.OFDM):
            for n in request.n_values:
                key = f"{scheme.value}_n{n}"
                for m in m_values:
                    grid = OtfsGrid(m=m, n=n, delta_f=request.delta_f)
                    alpha = delay_length(profile.tau_max, grid)
                    beta = doppler_length(nu_max, grid)
                    direct = formula_direct(m, n, scheme)
                    proposed = formula_table2_proposed(m, n, alpha, beta, profile.num_taps, scheme)
                    ratio = float(direct / proposed)
                    rows.append(ComplexityRow(
                        profile=profile.name, scheme=scheme.value, m=m, n=n,
                        alpha=alpha, beta=beta, p=profile.num_taps,
                        direct_cm=float(direct), proposed_cm=float(proposed), ratio=ratio
                    ))
                    max_ratio[key] = max(max_ratio.get(key, 0.0), ratio)
                self.logger.info(f"{profile.name} {key}: max direct/proposed ratio {max_ratio[key]:.3e}")

        csv_filename = None
        if request.output:
            df = pd.DataFrame([r.model_dump() for r in rows], columns=COMPLEXITY_COLUMNS)
            Path(request.output).parent.mkdir(parents=True, exist_ok=True)
            df.to_csv(request.output, index=False)
            csv_filename = str(request.output)
            self.logger.info(f"Complexity rows written to {csv_filename}")

        return ComplexityReport(rows=rows, max_ratio=max_ratio, csv_filename=csv_filename)

    def run_audit(self, request: AuditRequest) -> AuditReport:
        """Instrumented fast-receiver run on one random frame."""
        grid = request.grid
        profile = load_profile(request.profile, self.settings.profile_dir)
        rng = np.random.default_rng(request.seed)
        ch = build_channel_from_profile(profile, request.speed_mps, request.fc_hz, grid, seed=rng)
        scheme = ModulationScheme(kind=request.scheme, grid=grid)
        constellation = get_constellation(4)

        bits = rng.integers(0, 2, size=grid.mn * constellation.bits_per_symbol, dtype=np.int8)
        s = scheme.modulate(DdFrame.from_vector(grid, qam_map(bits, constellation)))
        sigma_sq = 10.0 ** (-request.snr_db / 10.0)
        rx = add_awgn(apply_channel(s, ch), NoiseModel(sigma_n_sq=sigma_sq, rng_seed=request.seed))

        counter = CmCounter()
        LmmseFastReceiver(ch, sigma_sq, scheme, counter=counter).equalize(rx, counter)
        params = CmFormula(m=grid.m, n=grid.n, alpha=ch.alpha, beta=ch.beta, p=ch.num_paths, scheme=request.scheme)
        report = audit_run(counter, params)
        if report.flagged_stages:
            self.logger.warning(f"Stages above 2x their closed form: {', '.join(report.flagged_stages)}")

        if request.output:
            Path(request.output).parent.mkdir(parents=True, exist_ok=True)
            audit_to_frame(report).to_csv(request.output, index=False)
            report.csv_filename = str(request.output)
            self.logger.info(f"Audit written to {request.output}")
        return report
