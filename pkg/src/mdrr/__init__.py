"""Animal sound classification: MFCC rearrangement, autoencoder reduction and
an attention Bi-LSTM classifier, with ablation, sweep and clustering tools."""

__version__ = "0.1.0"
