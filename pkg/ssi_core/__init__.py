"""SSI core package: semi shift invariant filter banks, subgraph filter learning, SemiGCN kernels."""

__version__ = "0.1.0"
