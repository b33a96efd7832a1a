# Linear algebra module
