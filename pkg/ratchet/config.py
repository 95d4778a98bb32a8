from pydantic_settings import BaseSettings


class Settings(BaseSettings):

    api_title: str = "Ratchet Lab API"
    api_version: str = "1.0.0"
    api_description: str = (
        "Numerics and exact simulation for Muller's ratchet with tournament selection"
    )

    log_level: str = "INFO"

    out_dir: str = "results"
    default_seed: int = 12345

    # Profile numerics
    kmax_default: int = 200

    # Forward simulation
    burn_in_factor: float = 10.0

    # Yule / branching random walk
    yule_threshold: int = 200
    yule_cap: int = 100_000
    censoring_limit: float = 0.01
    gw_depth_cap: int = 2000

    # ODE
    ode_dt: float = 0.01

    # Replicas
    workers: int = 1

    # compare mode
    acceptance_tolerance: float = 0.015

    class Config:
        env_file = ".env"
        env_prefix = "RATCHET_"
        case_sensitive = False


settings = Settings()
