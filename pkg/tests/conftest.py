from hypothesis import settings

# simulation-backed properties vary in speed with machine load
settings.register_profile("default", deadline=None)
settings.load_profile("default")
