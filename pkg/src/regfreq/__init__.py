"""Regional frequency-stability constraints and frequency-secured unit commitment."""
