# Batch prediction
