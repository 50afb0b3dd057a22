"""Synthetic multi-speaker FOA scene generation.

Scenes contain intermittent parametric voices that may jump to a new
direction during their silences, plus an isotropic noise bed at a
controlled SNR. Rendering returns the mixture, the per-speaker spatial
("wet") signals used as distillation targets, and frame-level ground
truth on the shared 32 ms grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .foa import DEFAULT_SAMPLE_RATE, Direction, FoaSignal, FrameGrid
from .tracks import Track

Interval = tuple[float, float]

VOICE_ACTIVE_RMS = 0.1
EDGE_RAMP_MS = 10.0
MIN_SIMULTANEOUS_SEPARATION_DEG = 30.0
# diffuse-field weighting of the velocity channels relative to W (SN3D),
# i.e. -4.77 dB
DIFFUSE_XYZ_WEIGHT = 1.0 / math.sqrt(3.0)


@dataclass(frozen=True)
class SpeakerSpec:
    """Parametric voice: pulse train at f0 shaped by formant resonators."""

    speaker_id: int
    f0: float
    formants: tuple[tuple[float, float, float], ...]
    am_rate: float

    def __post_init__(self):
        if not (80.0 <= self.f0 <= 320.0):
            raise ValueError(f"f0 {self.f0} outside [80, 320] Hz")
        if len(self.formants) < 2:
            raise ValueError("need at least 2 formants")
        for fc, bw, gain in self.formants:
            if gain <= 0.0:
                raise ValueError("formant gains must be positive")
            if fc <= 0.0 or bw <= 0.0:
                raise ValueError("formant center/bandwidth must be positive")
        object.__setattr__(self, "formants", tuple(tuple(map(float, f)) for f in self.formants))


def random_speaker_spec(rng: np.random.Generator, speaker_id: int) -> SpeakerSpec:
    """Draw a voice with well-spread formant and pitch parameters."""
    f0 = rng.uniform(95.0, 290.0)
    f1 = rng.uniform(280.0, 850.0)
    f2 = rng.uniform(max(f1 + 250.0, 950.0), 2300.0)
    f3 = rng.uniform(2400.0, 3400.0)
    f4 = rng.uniform(3500.0, 4600.0)
    formants = tuple(
        (fc, rng.uniform(60.0, 140.0) if i < 2 else rng.uniform(100.0, 220.0),
         rng.uniform(0.5, 1.5))
        for i, fc in enumerate((f1, f2, f3, f4))
    )
    return SpeakerSpec(speaker_id=speaker_id, f0=f0, formants=formants,
                       am_rate=rng.uniform(2.0, 6.0))


def _check_intervals(intervals: list[Interval], duration_s: float) -> None:
    prev_end = -math.inf
    for on, off in intervals:
        if off <= on:
            raise ValueError(f"empty or inverted activity interval ({on}, {off})")
        if on < prev_end:
            raise ValueError("activity intervals must be disjoint and sorted")
        prev_end = off
    if intervals and intervals[-1][1] > duration_s + 1e-9:
        raise ValueError("activity interval extends past scene duration")


def _resonator(excitation: np.ndarray, fc: float, bw: float, sample_rate: int) -> np.ndarray:
    r = math.exp(-math.pi * bw / sample_rate)
    w0 = 2.0 * math.pi * fc / sample_rate
    a = [1.0, -2.0 * r * math.cos(w0), r * r]
    # unit gain at the resonance frequency
    z = np.exp(-1j * w0)
    b0 = abs(1.0 + a[1] * z + a[2] * z * z)
    return lfilter([b0], a, excitation)


def synth_voice(spec: SpeakerSpec, intervals: list[Interval], duration_s: float,
                sample_rate: int = DEFAULT_SAMPLE_RATE, seed=0) -> np.ndarray:
    """Render one voice as mono samples, exactly zero outside `intervals`."""
    _check_intervals(intervals, duration_s)
    n = int(round(duration_s * sample_rate))
    out = np.zeros(n)
    if not intervals:
        return out

    rng = np.random.default_rng(seed)
    t = np.arange(n) / sample_rate

    vib_rate = rng.uniform(4.0, 6.5)
    vib_phase = rng.uniform(0.0, 2.0 * math.pi)
    inst_f = spec.f0 * (1.0 + 0.015 * np.sin(2.0 * math.pi * vib_rate * t + vib_phase))
    phase = np.cumsum(inst_f) / sample_rate
    pulses = np.zeros(n)
    ticks = np.nonzero(np.diff(np.floor(phase)) >= 1.0)[0] + 1
    pulses[ticks] = 1.0
    excitation = pulses + 0.04 * rng.standard_normal(n)

    voiced = np.zeros(n)
    for fc, bw, gain in spec.formants:
        voiced += gain * _resonator(excitation, fc, bw, sample_rate)

    am_phase = rng.uniform(0.0, 2.0 * math.pi)
    env = 1.0 - 0.225 * (1.0 + np.sin(2.0 * math.pi * spec.am_rate * t + am_phase))
    voiced *= env

    mask = np.zeros(n)
    ramp_n = int(round(EDGE_RAMP_MS * sample_rate / 1000.0))
    for on, off in intervals:
        i0 = int(round(on * sample_rate))
        i1 = min(int(round(off * sample_rate)), n)
        seg = i1 - i0
        if seg <= 0:
            continue
        r = min(ramp_n, seg // 4)
        seg_mask = np.ones(seg)
        if r > 0:
            ramp = 0.5 * (1.0 - np.cos(np.pi * (np.arange(r) + 1) / (r + 1)))
            seg_mask[:r] = ramp
            seg_mask[seg - r:] = ramp[::-1]
        mask[i0:i1] = seg_mask

    voiced *= mask
    active = mask > 0.0
    rms = math.sqrt(float(np.mean(voiced[active] ** 2))) if active.any() else 0.0
    if rms > 0.0:
        voiced *= VOICE_ACTIVE_RMS / rms
    return voiced


@dataclass(frozen=True)
class SceneSpec:
    """Full recipe for one scene; rendering is a pure function of it."""

    duration_s: float
    n_speakers: int
    speakers: tuple[SpeakerSpec, ...]
    activity: tuple[tuple[Interval, ...], ...]
    positions: tuple[tuple[Direction, ...], ...]
    snr_db: float | None = 15.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    seed: int = 0

    def __post_init__(self):
        if self.n_speakers not in (1, 2):
            raise ValueError("scenes support 1 or 2 speakers")
        if not (len(self.speakers) == len(self.activity) == len(self.positions) == self.n_speakers):
            raise ValueError("speakers, activity and positions must align with n_speakers")
        for intervals, dirs in zip(self.activity, self.positions):
            _check_intervals(list(intervals), self.duration_s)
            if len(dirs) != len(intervals):
                raise ValueError("one direction per activity segment required")
        object.__setattr__(self, "speakers", tuple(self.speakers))
        object.__setattr__(
            self, "activity", tuple(tuple(tuple(map(float, iv)) for iv in a) for a in self.activity)
        )
        object.__setattr__(self, "positions", tuple(tuple(p) for p in self.positions))


@dataclass(frozen=True)
class GroundTruth:
    """Per-frame speaker tracks; track k belongs to speaker_ids[k]."""

    grid: FrameGrid
    tracks: tuple[Track, ...]
    speaker_ids: tuple[int, ...]

    @property
    def n_frames(self) -> int:
        return self.tracks[0].n_frames if self.tracks else 0

    def any_active(self) -> np.ndarray:
        out = np.zeros(self.n_frames, dtype=bool)
        for tr in self.tracks:
            out |= tr.active
        return out

    def overlap_ratio(self) -> float:
        """Frames where >= 2 speakers are active over frames where any is."""
        if not self.tracks:
            return 0.0
        counts = np.zeros(self.n_frames, dtype=int)
        for tr in self.tracks:
            counts += tr.active.astype(int)
        any_n = int(np.count_nonzero(counts >= 1))
        both_n = int(np.count_nonzero(counts >= 2))
        return both_n / any_n if any_n else 0.0


def ground_truth_from_spec(spec: SceneSpec, grid: FrameGrid | None = None) -> GroundTruth:
    """Frame-level activity and directions: a frame is active when its
    center falls inside an activity interval; inactive frames hold the
    most recent segment direction."""
    if grid is None:
        grid = FrameGrid(sample_rate=spec.sample_rate)
    n_samples = int(round(spec.duration_s * spec.sample_rate))
    n_frames = grid.frame_count(n_samples)
    centers = grid.frame_centers_s(n_frames)

    tracks = []
    for k in range(spec.n_speakers):
        azimuth = np.zeros(n_frames)
        elevation = np.zeros(n_frames)
        active = np.zeros(n_frames, dtype=bool)
        segs = spec.activity[k]
        dirs = spec.positions[k]
        if segs:
            azimuth[:] = dirs[0].azimuth
            elevation[:] = dirs[0].elevation
        for (on, off), d in zip(segs, dirs):
            inside = (centers >= on) & (centers < off)
            active |= inside
            from_on = centers >= on
            azimuth[from_on] = d.azimuth
            elevation[from_on] = d.elevation
        tracks.append(Track(track_id=k, azimuth=azimuth, elevation=elevation, active=active))
    return GroundTruth(grid=grid, tracks=tuple(tracks),
                       speaker_ids=tuple(s.speaker_id for s in spec.speakers))


@dataclass(frozen=True)
class RenderedScene:
    mixture: FoaSignal
    wet: tuple[FoaSignal, ...]
    ground_truth: GroundTruth
    spec: SceneSpec


def _encode_segments(mono: np.ndarray, segs, dirs, sample_rate: int) -> FoaSignal:
    channels = np.zeros((4, mono.size))
    for (on, off), d in zip(segs, dirs):
        i0 = int(round(on * sample_rate))
        i1 = min(int(round(off * sample_rate)), mono.size)
        ux, uy, uz = d.unit_vector()
        seg = mono[i0:i1]
        channels[0, i0:i1] = seg
        channels[1, i0:i1] = seg * ux
        channels[2, i0:i1] = seg * uy
        channels[3, i0:i1] = seg * uz
    return FoaSignal(channels, sample_rate)


def render_scene(spec: SceneSpec, grid: FrameGrid | None = None) -> RenderedScene:
    """Render mixture, per-speaker wet signals and ground truth.

    The diffuse noise floor is scaled so the speech-to-noise power ratio
    on the W channel, measured over frames where any speaker is active,
    equals ``spec.snr_db``. ``snr_db=None`` (or +inf) disables noise.
    """
    sr = spec.sample_rate
    gt = ground_truth_from_spec(spec, grid)
    grid = gt.grid

    wets = []
    for k in range(spec.n_speakers):
        mono = synth_voice(spec.speakers[k], list(spec.activity[k]), spec.duration_s,
                           sample_rate=sr, seed=(spec.seed, 101 + k))
        wets.append(_encode_segments(mono, spec.activity[k], spec.positions[k], sr))

    speech = np.zeros_like(wets[0].channels)
    for w in wets:
        speech = speech + w.channels

    noiseless = spec.snr_db is None or (isinstance(spec.snr_db, float) and math.isinf(spec.snr_db))
    if noiseless:
        mixture = FoaSignal(speech, sr)
    else:
        rng = np.random.default_rng((spec.seed, 7))
        noise = rng.standard_normal((4, speech.shape[1]))
        noise[1:] *= DIFFUSE_XYZ_WEIGHT

        active_frames = np.nonzero(gt.any_active())[0]
        fs = grid.frame_samples
        sample_mask = np.zeros(speech.shape[1], dtype=bool)
        for f in active_frames:
            sample_mask[f * fs:(f + 1) * fs] = True
        if not sample_mask.any():
            sample_mask[:] = True
        speech_p = float(np.mean(speech[0, sample_mask] ** 2))
        noise_p = float(np.mean(noise[0, sample_mask] ** 2))
        scale = math.sqrt(speech_p / (noise_p * 10.0 ** (spec.snr_db / 10.0))) if speech_p > 0 else 0.0
        mixture = FoaSignal(speech + scale * noise, sr)

    return RenderedScene(mixture=mixture, wet=tuple(wets), ground_truth=gt, spec=spec)


def measured_snr_db(scene: RenderedScene) -> float:
    """W-channel speech-to-noise ratio over active frames, in dB."""
    speech = np.zeros(scene.mixture.n_samples)
    for w in scene.wet:
        speech = speech + w.w
    noise = scene.mixture.w - speech
    gt = scene.ground_truth
    fs = gt.grid.frame_samples
    sample_mask = np.zeros(speech.size, dtype=bool)
    for f in np.nonzero(gt.any_active())[0]:
        sample_mask[f * fs:(f + 1) * fs] = True
    np_ = float(np.mean(noise[sample_mask] ** 2))
    sp = float(np.mean(speech[sample_mask] ** 2))
    if np_ == 0.0:
        return math.inf
    return 10.0 * math.log10(sp / np_)


def sample_direction(rng: np.random.Generator) -> Direction:
    """Uniform draw on the sphere."""
    az = rng.uniform(-math.pi, math.pi)
    el = math.asin(rng.uniform(-1.0, 1.0))
    return Direction(az, el)


def _sample_direction_separated(rng, others: list[Direction],
                                min_sep_deg: float = MIN_SIMULTANEOUS_SEPARATION_DEG) -> Direction:
    min_sep = math.radians(min_sep_deg)
    for _ in range(256):
        d = sample_direction(rng)
        if all(d.angle_to(o) >= min_sep for o in others):
            return d
    raise RuntimeError("could not place a direction with the required separation")


def _alternating_intervals(rng, start_s, end_s, on_range, off_range, min_seg=0.6):
    intervals = []
    t = start_s
    while t < end_s - min_seg:
        seg = min(rng.uniform(*on_range), end_s - t)
        if seg < min_seg:
            break
        intervals.append((t, t + seg))
        t += seg + rng.uniform(*off_range)
    return intervals


def sample_scene_spec(rng_seed: int, n_speakers: int, duration_s: float,
                      overlap_target: float, snr_db: float | None = 15.0,
                      sample_rate: int = DEFAULT_SAMPLE_RATE) -> SceneSpec:
    """Draw a random SceneSpec hitting `overlap_target` within +-0.05.

    Each speaker gets one early, non-overlapped segment of >= 2.6 s so
    enrollment embeddings can always be built. For two speakers, overlap
    is created by interrupting segments placed strictly inside the first
    speaker's later segments; the interrupting onsets are therefore the
    overlapped ones while interrupted segments keep clean beginnings.
    """
    if not (0.0 <= overlap_target < 1.0):
        raise ValueError("overlap_target must be in [0, 1)")
    if n_speakers == 1 and overlap_target != 0.0:
        raise ValueError("overlap target must be 0 for single-speaker scenes")
    if n_speakers not in (1, 2):
        raise ValueError("scenes support 1 or 2 speakers")
    min_duration = 8.0 if n_speakers == 1 else 12.0
    if duration_s < min_duration:
        raise ValueError(f"duration too short, need >= {min_duration} s for {n_speakers} speakers")

    rng = np.random.default_rng(rng_seed)
    speakers = tuple(random_speaker_spec(rng, k) for k in range(n_speakers))
    grid = FrameGrid(sample_rate=sample_rate)

    if n_speakers == 1:
        t0 = rng.uniform(0.2, 0.6)
        first = (t0, t0 + rng.uniform(2.6, 3.4))
        rest = _alternating_intervals(rng, first[1] + rng.uniform(0.7, 1.5), duration_s - 0.1,
                                      on_range=(2.2, 4.0), off_range=(0.7, 1.6))
        intervals = [first] + rest
        dirs = tuple(sample_direction(rng) for _ in intervals)
        return SceneSpec(duration_s=duration_s, n_speakers=1, speakers=speakers,
                         activity=(tuple(intervals),), positions=(dirs,),
                         snr_db=snr_db, sample_rate=sample_rate, seed=int(rng_seed))

    tolerance = 0.03
    best = None
    for _ in range(80):
        t0 = rng.uniform(0.15, 0.5)
        a_enroll = (t0, t0 + rng.uniform(2.6, 3.4))
        b_start = a_enroll[1] + rng.uniform(0.4, 0.9)
        b_enroll = (b_start, b_start + rng.uniform(2.6, 3.4))
        fill_start = b_enroll[1] + rng.uniform(0.4, 0.9)
        on_lo = 2.8 + 3.0 * overlap_target
        on_hi = 4.5 + 4.0 * overlap_target
        a_fill = _alternating_intervals(rng, fill_start, duration_s - 0.1,
                                        on_range=(on_lo, on_hi), off_range=(0.5, 1.0))
        a_intervals = [a_enroll] + a_fill
        a_total = sum(off - on for on, off in a_intervals)
        b_solo = b_enroll[1] - b_enroll[0]

        # overlap segments sit strictly inside A's fill segments, so the
        # union duration stays a_total + b_solo while the intersection is
        # exactly the interruption time
        needed = overlap_target * (a_total + b_solo)
        jitters = [(rng.uniform(0.3, 0.7), rng.uniform(1.0, 2.2)) for _ in a_fill]
        for _adjust in range(10):
            interruptions = []
            remaining = needed
            for (on, off), (pos, piece_len) in zip(a_fill, jitters):
                if remaining <= 0.05:
                    break
                margin = 0.35
                cap = (off - on) - 2 * margin
                if cap < 0.6:
                    continue
                dur = min(piece_len, cap, remaining)
                if dur < 0.3:
                    dur = min(0.6, cap, remaining)
                start = on + margin + (cap - dur) * pos
                interruptions.append((start, start + dur))
                remaining -= dur
            b_intervals = sorted([b_enroll] + interruptions)

            candidate = _measured_overlap(a_intervals, b_intervals, duration_s, grid)
            err = candidate - overlap_target
            if best is None or abs(err) < abs(best[0]):
                best = (err, a_intervals, b_intervals)
            if abs(err) <= tolerance:
                break
            needed = max(0.0, needed - err * (a_total + b_solo))
        if best is not None and abs(best[0]) <= tolerance:
            break
    if best is None or abs(best[0]) > 0.05:
        raise RuntimeError(f"could not reach overlap target {overlap_target}")
    _, a_intervals, b_intervals = best

    a_dirs = [sample_direction(rng) for _ in a_intervals]
    b_dirs = []
    for on, off in b_intervals:
        concurrent = [d for (a_on, a_off), d in zip(a_intervals, a_dirs)
                      if a_on < off and on < a_off]
        b_dirs.append(_sample_direction_separated(rng, concurrent) if concurrent
                      else sample_direction(rng))

    return SceneSpec(duration_s=duration_s, n_speakers=2, speakers=speakers,
                     activity=(tuple(a_intervals), tuple(b_intervals)),
                     positions=(tuple(a_dirs), tuple(b_dirs)),
                     snr_db=snr_db, sample_rate=sample_rate, seed=int(rng_seed))


def _measured_overlap(a_intervals, b_intervals, duration_s, grid: FrameGrid) -> float:
    n_frames = grid.frame_count(int(round(duration_s * grid.sample_rate)))
    centers = grid.frame_centers_s(n_frames)
    a = np.zeros(n_frames, dtype=bool)
    b = np.zeros(n_frames, dtype=bool)
    for on, off in a_intervals:
        a |= (centers >= on) & (centers < off)
    for on, off in b_intervals:
        b |= (centers >= on) & (centers < off)
    any_n = int(np.count_nonzero(a | b))
    return int(np.count_nonzero(a & b)) / any_n if any_n else 0.0


def scene_spec_to_dict(spec: SceneSpec) -> dict:
    return {
        "duration_s": spec.duration_s,
        "n_speakers": spec.n_speakers,
        "snr_db": spec.snr_db,
        "sample_rate": spec.sample_rate,
        "seed": spec.seed,
        "speakers": [
            {
                "speaker_id": s.speaker_id,
                "f0": s.f0,
                "formants": [list(f) for f in s.formants],
                "am_rate": s.am_rate,
            }
            for s in spec.speakers
        ],
        "activity": [[list(iv) for iv in segs] for segs in spec.activity],
        "positions": [
            [{"azimuth": d.azimuth, "elevation": d.elevation} for d in dirs]
            for dirs in spec.positions
        ],
    }


def scene_spec_from_dict(payload: dict) -> SceneSpec:
    speakers = tuple(
        SpeakerSpec(
            speaker_id=int(s["speaker_id"]),
            f0=float(s["f0"]),
            formants=tuple(tuple(f) for f in s["formants"]),
            am_rate=float(s["am_rate"]),
        )
        for s in payload["speakers"]
    )
    positions = tuple(
        tuple(Direction(float(d["azimuth"]), float(d["elevation"])) for d in dirs)
        for dirs in payload["positions"]
    )
    activity = tuple(tuple((float(iv[0]), float(iv[1])) for iv in segs)
                     for segs in payload["activity"])
    return SceneSpec(
        duration_s=float(payload["duration_s"]),
        n_speakers=int(payload["n_speakers"]),
        speakers=speakers,
        activity=activity,
        positions=positions,
        snr_db=None if payload["snr_db"] is None else float(payload["snr_db"]),
        sample_rate=int(payload["sample_rate"]),
        seed=int(payload["seed"]),
    )


def write_scene_spec(path, spec: SceneSpec) -> None:
    with open(path, "w") as fh:
        json.dump(scene_spec_to_dict(spec), fh, sort_keys=True, indent=2)
        fh.write("\n")


def read_scene_spec(path) -> SceneSpec:
    with open(path) as fh:
        return scene_spec_from_dict(json.load(fh))
