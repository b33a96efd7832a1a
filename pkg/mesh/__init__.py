# Mesh module
