# Optimizer module
