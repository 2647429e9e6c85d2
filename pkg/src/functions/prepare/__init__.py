# Dataset validation and conversion
