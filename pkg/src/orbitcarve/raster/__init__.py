"""Differentiable rasterization."""

from .render import RasterConfig, RenderOutput, render, render_backward, render_backward_parts, vertex_normals_backward

__all__ = ["RasterConfig", "RenderOutput", "render", "render_backward", "render_backward_parts", "vertex_normals_backward"]
