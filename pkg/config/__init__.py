# Settings module
