# Assembly module
