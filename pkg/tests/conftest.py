import numpy as np
import pytest
from hypothesis import settings

from mvpf.geometry import Camera, intrinsics, look_at

settings.register_profile("mvpf", deadline=None, max_examples=40)
settings.load_profile("mvpf")


def random_camera(rng: np.random.Generator, width: int = 64, height: int = 48) -> Camera:
    eye = rng.uniform(-4, 4, size=3)
    eye[2] -= 6.0
    target = rng.uniform(-0.5, 0.5, size=3)
    R, t = look_at(eye, target)
    K = intrinsics(rng.uniform(30, 90), width, height, cx=rng.uniform(20, 44), cy=rng.uniform(14, 34))
    return Camera(K, R, t, width, height)


@pytest.fixture(scope="session")
def toy_run(tmp_path_factory):
    """The desk-scale two-stage training run shared by the slow tests.

    Trained once per session: stage 1, a parameter snapshot, then stage 2.
    """
    import time

    from mvpf.denoiser import MultiViewDenoiser
    from mvpf.training import ToySetup, encode_samples, evaluate_loss, save_model, train_two_stage

    setup = ToySetup()
    samples = setup.dataset()
    data = encode_samples(samples)
    model = MultiViewDenoiser(setup.model)
    init_loss = evaluate_loss(model, data, use_sync=False)
    t0 = time.perf_counter()
    train_two_stage(data, setup.model, setup.train, stages=(1,), model=model)
    stage1_seconds = time.perf_counter() - t0
    stage1_loss = evaluate_loss(model, data, use_sync=False)
    before = model.state_dict()
    train_two_stage(data, setup.model, setup.train, stages=(2,), model=model)
    after = model.state_dict()
    ckpt = tmp_path_factory.mktemp("toy") / "model.mvpf"
    save_model(ckpt, model)
    return {"setup": setup, "samples": samples, "data": data, "model": model, "init_loss": init_loss,
            "stage1_loss": stage1_loss, "stage1_seconds": stage1_seconds, "before_stage2": before,
            "after_stage2": after, "ckpt": ckpt}
