"""Desk-scale testbed for low-latency multi-speaker identity reassignment.

Pipeline: synthesize ambisonic scenes with intermittent jumping speakers
(:mod:`foatrack.scenes`), steer a first-order beamformer along tracks
(:mod:`foatrack.beamform`), distill a short-context speaker-embedding
student from a frozen long-context teacher (:mod:`foatrack.embeddings`,
:mod:`foatrack.distill`), inject tracker failure modes
(:mod:`foatrack.tracker`), reassign identities per fragment or per block
(:mod:`foatrack.reassign`) and score association accuracy
(:mod:`foatrack.metrics`).
"""

from .beamform import SteeringTrajectory, beamform, beamform_crop
from .distill import (
    CropSpec,
    TrainConfig,
    kd_grad,
    kd_grad_pooled,
    kd_loss,
    sample_crop,
    train_student,
)
from .embeddings import (
    StudentExtractor,
    StudentModel,
    TeacherExtractor,
    cosine,
    init_student,
    load_student,
    normalize_embedding,
    save_student,
    student_extract,
)
from .features import features, stats_pool, vad_mask
from .foa import (
    DEFAULT_SAMPLE_RATE,
    Direction,
    FoaSignal,
    FrameGrid,
    encode_plane_wave,
    mix,
    read_wav,
    write_wav,
)
from .metrics import AssAReport, MatchConfig, assa, bootstrap_assa, count_swaps, match_frames
from .reassign import (
    EnrollmentPool,
    Fragment,
    OracleExtractor,
    ReassignedTimeline,
    baseline_timeline,
    build_enrollments,
    decide,
    fragment_tracks,
    oracle_pool,
    reassign_blockwise,
    reassign_blockwise_stream,
    reassign_fragments,
)
from .scenes import (
    GroundTruth,
    RenderedScene,
    SceneSpec,
    SpeakerSpec,
    render_scene,
    sample_scene_spec,
    synth_voice,
)
from .tracker import ERROR_FREE, ErrorModel, simulate_tracker, simulate_tracker_detailed
from .tracks import Track, read_tracks, write_tracks

__version__ = "0.1.0"
