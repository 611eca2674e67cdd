"""Textual-interface task-oriented dialogue toolkit.

The interface state is a document tree rendered to canonical Markdown;
agents drive it with Chat/Search/Book actions parsed from a bracket command
grammar. Annotated dialogues replay into trajectories for training export,
and the evaluation module covers lexicalization, sentence BLEU,
Inform/Success (plus the fixed-response audit) and action accuracies.
"""

__version__ = "0.1.0"
