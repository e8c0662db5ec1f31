"""Train a small model on maze data and roll it out closed-loop.

Deliberately small (200 episodes, 8 epochs) so it finishes in a couple of
minutes on a laptop; expect imperfect but clearly goal-seeking behavior.
Writes distance-to-goal curves to demo_distances.csv.

Run: python demos/04_train_policy.py
"""

from dataclasses import replace

from sigstream.data import collect_dataset
from sigstream.maze import builtin_maze
from sigstream.model import build_model, train
from sigstream.profiles import model_profile, tokenizer_profile, train_profile
from sigstream.rollout import evaluate_model
from sigstream.tokens import encode_windows

spec = builtin_maze("u")
ds = collect_dataset(spec, episodes=200, noise=1.5, seed=1, wander=0.5)
print(f"dataset: {len(ds)} episodes, success rate {ds.success_rate():.2f}")

tok_cfg = tokenizer_profile("desk", mode="isc")
arrays = encode_windows(ds.trajectories, tok_cfg)
print(f"windows: {arrays.num_windows}, tokens per window: {arrays.layout.seq_len()}")

net = build_model(model_profile("desk"), tok_cfg, 4, 2, seed=0)
cfg = replace(train_profile("desk", seed=0), epochs=8, warmup_epochs=1)
result = train(net, arrays, cfg)
print("loss per epoch:", " ".join(f"{v:.3f}" for v in result.loss_history))

report = evaluate_model(net, tok_cfg, spec, goal_target=1.0, episodes=10, seed=5)
print(f"eval (fixed farthest start): success {report.success_rate:.1%}, "
      f"mean steps {report.mean_steps:.0f}, mean path {report.mean_path_length:.1f}")

with open("demo_distances.csv", "w", encoding="utf-8") as fh:
    fh.write("episode,step,distance\n")
    for ep, curve in enumerate(report.distance_curves):
        for t, d in enumerate(curve):
            fh.write(f"{ep},{t},{float(d)!r}\n")
print("wrote demo_distances.csv (distance-to-goal per step per episode)")

try:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    for curve in report.distance_curves:
        plt.plot(curve, alpha=0.6)
    plt.xlabel("step")
    plt.ylabel("distance to goal")
    plt.title("closed-loop rollouts on the U-maze")
    plt.savefig("demo_distances.png", dpi=120)
    print("wrote demo_distances.png")
except ImportError:
    pass
