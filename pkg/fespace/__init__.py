# Finite element spaces module
