"""Experiment modes and the inputs each one consumes."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Mode(str, Enum):
    TWO_STAGE_DUAL_TASK = "two_stage_dual_task"
    TWO_STAGE_T0_ONLY = "two_stage_t0_only"
    TWO_STAGE_T1_ONLY = "two_stage_t1_only"
    TWO_STAGE_NO_CLINICAL = "two_stage_no_clinical"
    TWO_STAGE_NO_SUBTYPES = "two_stage_no_subtypes"
    TWO_STAGE_NO_CLINICAL_NO_SUBTYPES = "two_stage_no_clinical_no_subtypes"
    CONVENTIONAL_T0T1 = "conventional_t0t1"
    CONVENTIONAL_TRAIN_T0T1T2_TEST_T0T1 = "conventional_train_t0t1t2_test_t0t1"
    STAGE1_FULL = "stage1_full"


@dataclass(frozen=True)
class ModeSpec:
    """What a mode feeds its final model.

    ``two_stage`` modes train a Stage-1 network on T0+T1+T2 first and then a
    Stage-2 network whose RNN sees ``rnn_timepoints``.  Other modes train one
    single-task network on ``train_timepoints`` and predict from
    ``test_timepoints``.
    """

    label: str
    two_stage: bool
    train_timepoints: tuple
    test_timepoints: tuple
    rnn_timepoints: tuple = ()
    use_clinical: bool = True
    use_subtype: bool = True

    @property
    def val_timepoints(self) -> tuple:
        # validation mirrors training, including for the length-3/length-2 baseline
        return self.train_timepoints


_ALL = ("T0", "T1", "T2")
_EARLY = ("T0", "T1")

MODE_SPECS = {
    Mode.TWO_STAGE_DUAL_TASK: ModeSpec(
        "2-stage dual-task: using T0+T1+clinical+subtypes", True, _EARLY, _EARLY, _EARLY),
    Mode.TWO_STAGE_NO_CLINICAL_NO_SUBTYPES: ModeSpec(
        "2-stage dual-task without clinical & subtypes", True, _EARLY, _EARLY, _EARLY,
        use_clinical=False, use_subtype=False),
    Mode.TWO_STAGE_NO_CLINICAL: ModeSpec(
        "2-stage dual-task without clinical", True, _EARLY, _EARLY, _EARLY, use_clinical=False),
    Mode.TWO_STAGE_NO_SUBTYPES: ModeSpec(
        "2-stage dual-task without subtypes", True, _EARLY, _EARLY, _EARLY, use_subtype=False),
    Mode.TWO_STAGE_T0_ONLY: ModeSpec(
        "2-stage dual-task: using T0+clinical+subtypes", True, ("T0",), ("T0",), ("T0",)),
    Mode.TWO_STAGE_T1_ONLY: ModeSpec(
        "2-stage dual-task: using T1+clinical+subtypes", True, ("T1",), ("T1",), ("T1",)),
    Mode.CONVENTIONAL_T0T1: ModeSpec(
        "Conventional: T0+T1+clinical+subtypes", False, _EARLY, _EARLY),
    Mode.CONVENTIONAL_TRAIN_T0T1T2_TEST_T0T1: ModeSpec(
        "Conventional: trained using T0+T1+T2+clinical+subtypes, tested on "
        "T0+T1+clinical+subtypes", False, _ALL, _EARLY),
    Mode.STAGE1_FULL: ModeSpec(
        "Stage 1: T0+T1+T2+clinical+subtypes", False, _ALL, _ALL),
}

# the eight rows of the published comparison table, in its order
TABLE_MODES = (
    Mode.TWO_STAGE_DUAL_TASK, Mode.TWO_STAGE_NO_CLINICAL_NO_SUBTYPES, Mode.TWO_STAGE_NO_CLINICAL,
    Mode.TWO_STAGE_NO_SUBTYPES, Mode.TWO_STAGE_T0_ONLY, Mode.TWO_STAGE_T1_ONLY,
    Mode.CONVENTIONAL_T0T1, Mode.CONVENTIONAL_TRAIN_T0T1T2_TEST_T0T1,
)


def parse_mode(name) -> Mode:
    if isinstance(name, Mode):
        return name
    try:
        return Mode(name)
    except ValueError:
        valid = ", ".join(m.value for m in Mode)
        raise ValueError(f"unknown mode {name!r}; valid modes: {valid}") from None


def spec_for(mode) -> ModeSpec:
    return MODE_SPECS[parse_mode(mode)]
