"""Face-crop dataset construction: frames -> gated detection -> crop -> 224×224."""
from .crop import (
    DEFAULT_MARGIN,
    FACE_SIZE,
    IMAGENET_MEANS,
    IMAGENET_STDS,
    crop_box,
    crop_face,
    normalize_resize,
    resize_face,
    standardize,
)
from .dataset import (
    INDEX_NAME,
    BuildResult,
    IndexRow,
    PipelineConfig,
    build_face_dataset,
    process_video,
    read_index,
    write_index,
)
from .detect import (
    DEFAULT_THRESHOLD,
    FaceDetection,
    LookupDetector,
    MediaPipeDetector,
    StaticDetector,
    detect_face,
    frame_digest,
    landmark_bbox,
    make_detector,
)
from .frames import FrameImage, extract_frames, read_rgb, write_rgb
