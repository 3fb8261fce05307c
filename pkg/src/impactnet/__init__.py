"""Head-impact detection pipeline for instrumented-mouthguard kinematics."""

__version__ = "0.1.0"
