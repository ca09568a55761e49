"""Scenario files, the two-stage pipeline, campaigns and the CLI."""

from relnav.harness.campaign import CampaignSummary, monte_carlo, sweep
from relnav.harness.pipeline import RmaeMetric, RunResult, design_plan, rmae, run_pipeline
from relnav.harness.scenario import Scenario

__all__ = ["CampaignSummary", "RmaeMetric", "RunResult", "Scenario", "design_plan",
           "monte_carlo", "rmae", "run_pipeline", "sweep"]
