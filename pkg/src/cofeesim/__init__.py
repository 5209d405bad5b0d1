"""cofeesim: deterministic simulator for data-triggered dataflow scheduling
across edge, fog and cloud resources."""

__version__ = "0.1.0"
