"""uqid: fixed-rate universal lossy coding with joint source identification.

A two-stage block codec for compactly parametrized i.i.d. sources on a real
interval: the previous block drives a minimum-distance density estimate, the
estimate is quantized into a hypercube grid over the parameter space and sent
as a fixed-width header, and the current block is quantized with the codebook
matched to the decoded cell. A seeded experiment harness measures the
identification error, rate overhead, and distortion redundancy of the scheme
against a matched-design baseline.
"""

__version__ = "0.1.0"
