# Finite-difference gradient check
