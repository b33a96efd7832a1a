# Boundary control operators module
