"""Renormalization trails of multicritical circle maps and the skew product that encodes them."""
