"""Long-running pipelines: training and evaluation."""
