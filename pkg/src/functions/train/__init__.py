# Model training
