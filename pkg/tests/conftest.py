import hypothesis

hypothesis.settings.register_profile(
    "repeatable",
    hypothesis.settings(
        max_examples=75,
        derandomize=True,
        deadline=None,
    ),
)
hypothesis.settings.load_profile("repeatable")
