"""Neural adapter for the complaint-mining wire protocol.

A small transformer token classifier with a trainable subword vocabulary,
served over newline-delimited JSON so the main pipeline can use it in
place of the built-in tagger. The package talks to the pipeline only
through its public surfaces: the annotation file format, the adapter
wire protocol, and the `cemine` command line.
"""

__version__ = "0.1.0"
