"""Angles-only relative navigation: active-learning input design, batch IROD with
analytical covariance, and EKF + MPC closed-loop rendezvous."""

__version__ = "0.1.0"
