"""Pydantic schemas for result records written by the pipeline"""
import math
from typing import Optional

from pydantic import BaseModel, Field


class LossRecord(BaseModel):
    """one row of the loss history"""
    iteration: int
    image: float = Field(description="L_image")
    reg_base: float = 0.0
    reg_rough: float = 0.0
    reg_metal: float = 0.0
    total: float

    def csv_row(self) -> list:
        return [self.iteration, f"{self.image:.9g}", f"{self.reg_base:.9g}",
                f"{self.reg_rough:.9g}", f"{self.reg_metal:.9g}", f"{self.total:.9g}"]


LOSS_CSV_HEADER = ['iteration', 'L_image', 'L_reg_base', 'L_reg_rough', 'L_reg_metal', 'total']


class RelightRow(BaseModel):
    """PSNR of relit renders under one probe"""
    probe: str
    frames: int
    mean_psnr: float
    min_psnr: float

    def csv_row(self) -> list:
        return [self.probe, self.frames, format_db(self.mean_psnr), format_db(self.min_psnr)]


RELIGHT_CSV_HEADER = ['probe', 'frames', 'mean_psnr_db', 'min_psnr_db']


class MetricRow(BaseModel):
    """PSNR of one named comparison"""
    name: str
    psnr: float
    pixels: int
    note: Optional[str] = None

    def csv_row(self) -> list:
        return [self.name, format_db(self.psnr), self.pixels, self.note or '']


METRIC_CSV_HEADER = ['name', 'psnr_db', 'pixels', 'note']


def format_db(value: float) -> str:
    """decibels with the infinite sentinel spelled out"""
    return 'inf' if math.isinf(value) else f"{value:.4f}"
