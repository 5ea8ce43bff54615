"""Configuration, meshes, reports and the command line driver."""
