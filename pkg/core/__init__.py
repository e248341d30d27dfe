"""Corpus, model, training and evaluation components."""
