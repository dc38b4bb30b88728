"""Plotting for longshort CSV artifacts.

This package never recomputes model math: every figure is a pure function of
the input CSV files and the plot spec. Supported kinds and the CSV schema
each one expects:

    length-curve         length,loss,n,clamped        one series per CSV
    reparam-compare      length,loss,n,clamped        one series per CSV
    correlation-scatter  label,pe,alpha,l_train,loss_train,misalign,long_logppl
    loss-parts           step,total,ce,misalign       total/ce/misalign per CSV

Length-sweep kinds shade the training range [1, l_train] in light red and
default to a log y-axis (length-task losses span orders of magnitude; pass
a linear scale for mean-task curves).
"""

from .render import PlotSpec, SchemaError, render

__all__ = ["PlotSpec", "SchemaError", "render"]
