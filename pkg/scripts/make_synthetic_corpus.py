"""Generate the bundled synthetic corpus.

The real annotated feature requests are not redistributable here, so this
script writes a synthetic stand-in with the same shape: 100 requests from two
repositories, 25 of them defect-free, and per-defect request/instance counts of

    lexical 24/42, syntactic 16/24, semantic 9/10, pragmatic 17/32,
    vagueness 11/14, incompleteness 57/57.

Mean turnaround of the closed requests is 254 days for the first repository
and 599 for the second. Output is deterministic.

    python3 scripts/make_synthetic_corpus.py [out.jsonl]
"""
import random
import sys
from datetime import datetime, timedelta, timezone
from pathlib import Path

from reqclarify.corpus import (
    AmbiguityAnnotation,
    AnnotatedCorpus,
    Comment,
    FeatureRequest,
    IncompletenessAnnotation,
    corpus_stats,
    save_corpus,
)
from reqclarify.taxonomy import DefectKind

OUT = Path(__file__).resolve().parents[1] / "src/reqclarify/data/corpus/synthetic_corpus.jsonl"
REPOS = ("mastodon/mastodon-android", "signalapp/Signal-Android")
TURNAROUND = {REPOS[0]: 254, REPOS[1]: 599}

# kind -> (requests, instances)
COUNTS = {
    DefectKind.LEXICAL: (24, 42),
    DefectKind.SYNTACTIC: (16, 24),
    DefectKind.SEMANTIC: (9, 10),
    DefectKind.PRAGMATIC: (17, 32),
    DefectKind.VAGUENESS: (11, 14),
}
N_REQUESTS, N_CLEAN, N_INCOMPLETE = 100, 25, 57

TOPICS = [
    "Scheduled messages", "Grouped notifications", "Chat folders", "Message reactions",
    "Draft sync", "Media gallery", "Quote posts", "Read receipts", "Voice notes",
    "Story replies", "Link previews", "Search filters", "Profile badges", "Backup export",
    "Sticker packs", "Timeline filters", "Mention alerts", "Group invites", "Disappearing media",
    "Poll options", "Contact sorting", "Keyboard shortcuts", "Post translations", "Accessibility labels",
]

CLEAR = [
    "Add a toggle under Settings > Notifications that turns this on or off.",
    "The setting should default to off for existing users.",
    "Show a confirmation dialog before the action is applied.",
    "The option should be available on both phone and tablet layouts.",
    "Screen readers should announce the new control with its label.",
    "The change should not affect accounts that never enable it.",
    "Keep the existing long-press menu unchanged.",
    "Include the new option in the backup so it survives a reinstall.",
    "A single tap on the icon should open the new screen.",
    "The counter should reset to zero when the screen is opened.",
]

# (sentence with {seg}, segment, interpretations, reasoning, cqs)
LEXICAL = [
    ("It would help to {seg} so it does not get lost.", "pin the chat",
     ["keep the chat at the top of the list", "lock the chat behind a PIN code"],
     "The word 'pin' can mean fixing an item in place or a numeric code used to lock something.",
     ["Should the chat stay at the top of the list, or be protected by a PIN code?"]),
    ("There should be a way to {seg} before sending.", "clear the message",
     ["delete the typed text", "make the wording of the message easier to understand"],
     "'Clear' can mean erase or make understandable.",
     ["Do you want a button that erases the draft, or help to make the text clearer?"]),
    ("Please let me {seg} from people I do not follow.", "block posts",
     ["hide those posts from my timeline", "stop those accounts from interacting with me"],
     "'Block' can mean hiding content or cutting off an account entirely.",
     ["Should the posts only be hidden, or should the accounts be blocked from contacting you?"]),
    ("I want to {seg} without leaving it.", "mute the group",
     ["silence notifications from the group", "turn off audio playback inside the group"],
     "'Mute' can refer to notifications or to sound playback.",
     ["Do you mean silencing notifications or turning off media sound in the group?"]),
    ("A button to {seg} would be useful.", "save the media",
     ["download the media to the device gallery", "keep the media from being deleted in the chat"],
     "'Save' can mean export to storage or protect from deletion.",
     ["Should saving export the file to the gallery or keep it from expiring in the chat?"]),
    ("Users should be able to {seg} easily.", "follow the thread",
     ["subscribe to updates from the thread", "read the thread in order"],
     "'Follow' can mean subscribing or keeping track while reading.",
     ["Do you want notifications for new replies, or an easier way to read the thread?"]),
    ("There is no way to {seg} right now.", "flag the message",
     ["mark the message as important", "report the message to moderators"],
     "'Flag' can mean marking for oneself or reporting abuse.",
     ["Is flagging meant as a personal bookmark or as a report to moderators?"]),
    ("I would like to {seg} to my contacts.", "share my status",
     ["publish a status update", "show whether I am online"],
     "'Status' can mean a posted update or an online presence indicator.",
     ["Do you mean a posted status update or your online or offline presence?"]),
    ("The app could {seg} on the profile page.", "show the handle",
     ["display the username", "display a drag handle for reordering"],
     "'Handle' can mean a username or a draggable UI element.",
     ["Should the profile show the account username or a control to drag items?"]),
    ("It should {seg} when I switch devices.", "keep the history",
     ["retain the message history", "retain the search history"],
     "'History' could refer to messages or to past searches.",
     ["Which history should be kept, the messages or the recent searches?"]),
    ("Add an option to {seg} for new posts.", "boost the post",
     ["reshare the post to followers", "promote the post so more people see it"],
     "'Boost' can mean resharing or increasing reach.",
     ["Do you mean resharing to your followers or promoting the post to a wider audience?"]),
    ("It would be great to {seg} from the menu.", "archive the chat",
     ["hide the chat from the main list", "export the chat to a file"],
     "'Archive' can mean hiding in the app or storing a copy externally.",
     ["Should archiving hide the chat in the app or produce an exported copy?"]),
]

SYNTACTIC = [
    ("Show {seg} at the top.", "new replies and mentions from friends",
     ["new replies from anyone and mentions from friends", "new replies and mentions, both from friends"],
     "It is unclear whether 'from friends' applies to replies as well as mentions.",
     ["Should only replies from friends be shown, or replies from everyone?"]),
    ("Please allow {seg}.", "editing messages with images",
     ["editing messages that contain images", "editing messages by adding images"],
     "The phrase 'with images' can attach to the messages or to the editing.",
     ["Do you want to edit messages that contain images, or add images while editing?"]),
    ("I want to {seg}.", "hide the read receipts of contacts in groups",
     ["hide receipts of contacts when inside groups", "hide receipts only of contacts who are in groups"],
     "'In groups' may modify the contacts or where the receipts are hidden.",
     ["Should receipts be hidden inside group chats, or for contacts who share a group with you?"]),
    ("The app should {seg}.", "send voice notes to groups with captions",
     ["send captioned voice notes to groups", "send voice notes to groups that have captions enabled"],
     "'With captions' can attach to the voice notes or to the groups.",
     ["Should the voice notes carry captions, or should they go to groups with captions enabled?"]),
    ("Let me {seg}.", "delete all chats older than a week or archived",
     ["delete chats that are older than a week or are archived", "delete chats older than a week or older than the archive date"],
     "The scope of 'or archived' is unclear in the sentence structure.",
     ["Should archived chats be deleted regardless of age?"]),
    ("Could you {seg}?", "display the avatar of the sender only once",
     ["display the avatar only once per sender", "display only the avatar of the sender, once"],
     "'Only once' can modify the avatar display or the sender.",
     ["Should the avatar appear once per group of messages, or once per conversation?"]),
    ("It would be nice to {seg}.", "search old posts and replies by date",
     ["search old posts, and replies by date", "search both old posts and replies by date"],
     "'By date' may apply to both posts and replies or only to replies.",
     ["Should the date filter apply to posts as well as replies?"]),
    ("I need to {seg}.", "notify members who joined recently by email",
     ["send email to recently joined members", "notify members who joined through email recently"],
     "'By email' can attach to the notification or to how members joined.",
     ["Should the notification be sent by email, or target members who joined via email?"]),
    ("Please {seg}.", "sort contacts and groups with unread messages first",
     ["sort contacts and groups so unread ones come first", "sort contacts, and put groups with unread messages first"],
     "'With unread messages' may modify both contacts and groups or only groups.",
     ["Should unread contacts also move to the top, or only unread groups?"]),
    ("We should {seg}.", "translate posts from people in other languages",
     ["translate posts written in other languages", "translate posts from people who speak other languages"],
     "'In other languages' can modify the posts or the people.",
     ["Should translation depend on the language of the post or on the author?"]),
]

SEMANTIC = [
    ("In my opinion {seg}.", "every member should see a pinned message",
     ["all members see the same pinned message", "each member can pin their own message"],
     "The quantifier scope leaves open whether one message is shared by all.",
     ["Is there one pinned message for everyone, or can each member pin their own?"]),
    ("For safety {seg}.", "all admins must approve a new member",
     ["every admin must approve individually", "approval from the admin group as a whole is enough"],
     "It is unclear whether all admins act together or each one separately.",
     ["Does every admin need to approve, or is one approval from the admin team enough?"]),
    ("I suggest that {seg}.", "each group can have a moderator",
     ["every group may have its own moderator", "one moderator may be shared by all groups"],
     "The relation between groups and moderators can be read two ways.",
     ["Should each group get its own moderator, or is one moderator shared across groups?"]),
    ("It would be fair if {seg}.", "two admins can remove a member",
     ["two admins together are needed to remove a member", "any of two admins can remove a member"],
     "It is unclear whether both admins are required jointly.",
     ["Must two admins agree to remove a member, or can either of them do it?"]),
    ("Ideally {seg}.", "every post gets a reaction from a friend",
     ["each post gets a reaction from some friend", "one friend reacts to every post"],
     "The scope of 'every' and 'a friend' gives two meanings.",
     ["Do you mean any friend reacting to each post, or one friend reacting to all posts?"]),
    ("Also {seg}.", "a backup is created for all chats",
     ["one backup contains all chats", "each chat gets its own backup"],
     "The meaning of 'a backup for all chats' depends on quantifier scope.",
     ["Should there be one backup for all chats, or one per chat?"]),
]

PRAGMATIC = [
    ("It should work {seg}.", "like it does in the other app",
     ["like in a competitor app", "like in the web version of this app"],
     "The referenced app is not identified in the request.",
     ["Which app are you referring to?"]),
    ("Put the button on {seg}.", "this screen",
     ["the chat list", "the conversation view"],
     "'This screen' refers to context the reader cannot see.",
     ["Which screen do you mean?"]),
    ("Bring back {seg}.", "the old behavior",
     ["the behavior before the last release", "the behavior from an older major version"],
     "The earlier behavior is not described.",
     ["Which version had the behavior you want back, and how did it work?"]),
    ("The setting should be in {seg}.", "the usual place",
     ["the app settings", "the per-chat settings"],
     "'The usual place' depends on the reader sharing the requester's habits.",
     ["Where would you expect to find this setting?"]),
    ("Please do {seg}.", "the same thing for stories",
     ["apply the same change to stories", "add the same button to stories"],
     "What 'the same thing' refers to depends on context outside the sentence.",
     ["What exactly should be done for stories?"]),
    ("It should behave {seg}.", "the way everyone expects",
     ["like most messaging apps", "like the platform default"],
     "The expectation being referred to is not stated.",
     ["What behavior do you expect, and based on which app?"]),
    ("Make {seg} bigger.", "that button",
     ["the send button", "the attachment button"],
     "'That button' points at something not named in the request.",
     ["Which button do you mean?"]),
    ("As discussed {seg}, this is needed.", "in the other issue",
     ["in a linked issue", "in a forum thread"],
     "The referenced discussion is not linked.",
     ["Which issue or discussion are you referring to?"]),
    ("It should match {seg}.", "what they did on desktop",
     ["the desktop client behavior", "a desktop app from another vendor"],
     "'They' and 'desktop' have no explicit referent.",
     ["Which desktop client and which behavior do you mean?"]),
    ("Add it {seg}.", "next to the other one",
     ["next to the existing toggle", "next to the other menu entry"],
     "'The other one' cannot be resolved from the request alone.",
     ["Next to which control should it be placed?"]),
]

VAGUENESS = [
    ("Right now the list {seg} when a post is popular.", "looks messy",
     ["too many entries are shown", "entries are not aligned"],
     "'Messy' has no measurable criterion.",
     ["What makes the list look messy, and what would a tidy list look like?"]),
    ("I get {seg} every day.", "a lot of notifications",
     ["more than ten notifications", "more than a hundred notifications"],
     "'A lot' does not give a number.",
     ["Roughly how many notifications do you get, and how many would be acceptable?"]),
    ("Loading should be {seg}.", "much faster",
     ["under one second", "twice as fast as today"],
     "'Much faster' has no target.",
     ["What loading time would you consider fast enough?"]),
    ("The editor should be {seg}.", "more user-friendly",
     ["fewer taps to format text", "clearer labels on buttons"],
     "'User-friendly' is subjective.",
     ["Which parts of the editor are hard to use today?"]),
    ("The icons are {seg} on large phones.", "too small",
     ["below the platform minimum touch size", "smaller than the text next to them"],
     "'Too small' gives no size target.",
     ["What size should the icons have?"]),
    ("I would prefer {seg}.", "a cleaner layout",
     ["less visual clutter", "more spacing between items"],
     "'Cleaner' is subjective.",
     ["Which elements should be removed or spaced out for a cleaner layout?"]),
    ("This happens {seg}.", "quite often",
     ["several times a day", "once a week"],
     "'Quite often' does not give a frequency.",
     ["How often does this happen?"]),
    ("Give each message {seg}.", "a bit more space",
     ["a few pixels of padding", "a full empty line"],
     "'A bit more' gives no amount.",
     ["How much extra space would you like between messages?"]),
    ("The option should be {seg}.", "easy to find",
     ["on the main screen", "one level deep in settings"],
     "'Easy to find' has no criterion.",
     ["Where would you look for this option first?"]),
    ("Please add {seg}.", "nicer animations",
     ["smoother transitions", "more playful effects"],
     "'Nicer' is a matter of taste.",
     ["Which animations should change, and in what way?"]),
]

BANKS = {
    DefectKind.LEXICAL: LEXICAL, DefectKind.SYNTACTIC: SYNTACTIC, DefectKind.SEMANTIC: SEMANTIC,
    DefectKind.PRAGMATIC: PRAGMATIC, DefectKind.VAGUENESS: VAGUENESS,
}

# (missing items, reasoning, cqs)
INCOMPLETE = [
    (["time zone handling", "how to cancel a scheduled item"],
     "The request does not say how time zones are handled or how a scheduled item is cancelled.",
     ["Which time zone should the schedule use?", "How should a user cancel or edit it?"]),
    (["maximum number of items shown", "behavior when the limit is reached"],
     "No display limit is given and the overflow behavior is not described.",
     ["How many items should be shown at most?", "What should happen once that limit is reached?"]),
    (["which platforms are affected"],
     "The request does not say whether phones, tablets or both are meant.",
     ["Should this apply to phones, tablets, or both?"]),
    (["layout of the new element"],
     "The request does not describe where or how the new element appears.",
     ["Where on the screen should the new element appear and what should it look like?"]),
    (["privacy implications", "who can see the information"],
     "Visibility of the new information and its privacy impact are not covered.",
     ["Who should be able to see this information?", "Should it be opt-in for privacy reasons?"]),
    (["default setting"],
     "The request does not say whether the feature is on or off by default.",
     ["Should the feature be enabled by default?"]),
    (["how the feature is triggered"],
     "The request does not say what user action starts the feature.",
     ["What action should start this feature?"]),
    (["behavior for existing data"],
     "It is not stated what happens to data created before the change.",
     ["Should the change apply to existing messages or only new ones?"]),
    (["error handling when offline"],
     "Offline behavior is not described.",
     ["What should happen if the device is offline?"]),
    (["notification behavior"],
     "The request does not say whether users are notified.",
     ["Should users receive a notification when this happens?"]),
    (["performance expectations", "storage limits"],
     "The request gives no performance or storage bounds.",
     ["How quickly should this complete?", "How much storage may it use?"]),
    (["interaction with existing settings"],
     "The request does not explain how this combines with current settings.",
     ["How should this interact with the existing settings?"]),
    (["accessibility requirements"],
     "Accessibility needs for the new feature are not mentioned.",
     ["How should screen readers present this feature?"]),
    (["group chat behavior"],
     "The request only considers one-to-one chats.",
     ["Should this also work in group chats?"]),
    (["sync across linked devices"],
     "It is not said whether the feature syncs to linked devices.",
     ["Should this sync across linked devices?"]),
]

COMMENTS = [
    "Thanks for the suggestion, we will look into it.",
    "Is there any update on this?",
    "I would love this too.",
    "Could you describe your use case in more detail?",
    "This is on our list but no timeline yet.",
    "Related to an older request, keeping this one open.",
]


def _multiplicities(n_requests, n_instances, rng):
    """Instances per request: each request gets 1 or 2, summing to n_instances."""
    twos = n_instances - n_requests
    counts = [2] * twos + [1] * (n_requests - twos)
    rng.shuffle(counts)
    return counts


def _assign(rng):
    """kind -> {request index: instance count}; every index < 75 is defective."""
    defective = list(range(N_REQUESTS - N_CLEAN))
    incomplete = set(defective[:N_INCOMPLETE])
    must_cover = [i for i in defective if i not in incomplete]
    chosen = {kind: [] for kind in COUNTS}
    kinds = list(COUNTS)
    for j, idx in enumerate(must_cover):
        chosen[kinds[j % len(kinds)]].append(idx)
    for kind, (n_req, _) in COUNTS.items():
        pool = [i for i in defective if i not in chosen[kind]]
        chosen[kind] += rng.sample(pool, n_req - len(chosen[kind]))
    out = {}
    for kind, (n_req, n_inst) in COUNTS.items():
        out[kind] = dict(zip(sorted(chosen[kind]), _multiplicities(n_req, n_inst, rng)))
    return out, incomplete


def _durations(n, mean, rng):
    days = [rng.randint(max(1, mean // 4), mean * 2) for _ in range(n - 1)]
    last = mean * n - sum(days)
    while last < 1:
        days = [max(1, d - 10) for d in days]
        last = mean * n - sum(days)
    return days + [last]


def build(seed=2025):
    rng = random.Random(seed)
    assignment, incomplete = _assign(rng)
    numbers = {repo: sorted(rng.sample(range(100, 7000), N_REQUESTS)) for repo in REPOS}
    order = list(range(N_REQUESTS))
    rng.shuffle(order)  # interleave defective and clean requests across repos

    requests, amb, inc = [], [], []
    closed_slots = {repo: [] for repo in REPOS}
    plan = []
    for pos, idx in enumerate(order):
        repo = REPOS[pos % 2]
        number = numbers[repo][pos // 2]
        closed = pos % 4 < 2
        plan.append((idx, repo, number, closed))
        if closed:
            closed_slots[repo].append(idx)
    durations = {}
    for repo, idxs in closed_slots.items():
        for idx, d in zip(idxs, _durations(len(idxs), TURNAROUND[repo], rng)):
            durations[idx] = d

    for idx, repo, number, closed in plan:
        topic = TOPICS[idx % len(TOPICS)]
        sentences, anns = [], []
        for kind, per_request in assignment.items():
            k = per_request.get(idx, 0)
            for entry in rng.sample(BANKS[kind], k):
                sentence, segment, interps, reasoning, cqs = entry
                sentences.append(sentence.format(seg=segment))
                anns.append((kind, segment, interps, reasoning, cqs))
        rng.shuffle(sentences)
        intro = f"I would like better support for {topic.lower()}."
        if not sentences:
            sentences = rng.sample(CLEAR, 2)
        elif idx not in incomplete:
            sentences.append(rng.choice(CLEAR))
        body = " ".join([intro] + sentences)
        created = datetime(2018, 1, 1, tzinfo=timezone.utc) + timedelta(
            days=rng.randint(0, 1800), hours=rng.randint(0, 23))
        closed_at = created + timedelta(days=durations[idx]) if closed else None
        comments = tuple(
            Comment(author=f"user{rng.randint(1, 400)}", body=rng.choice(COMMENTS),
                    created_at=created + timedelta(days=rng.randint(1, 30)))
            for _ in range(rng.randint(1, 3))
        )
        request = FeatureRequest(
            repo=repo, issue_number=number, title=topic, body=body,
            author=f"user{rng.randint(1, 400)}", created_at=created, closed_at=closed_at,
            state="closed" if closed else "open",
            labels=("Feature Request",) if repo == REPOS[0] else ("Feature",),
            comments=comments,
        )
        requests.append(request)
        for kind, segment, interps, reasoning, cqs in anns:
            amb.append(AmbiguityAnnotation(request.key, kind, segment, tuple(interps), reasoning,
                                           tuple(cqs)))
        if idx in incomplete:
            items, reasoning, cqs = INCOMPLETE[rng.randrange(len(INCOMPLETE))]
            inc.append(IncompletenessAnnotation(request.key, tuple(items), reasoning, tuple(cqs)))
    requests.sort(key=lambda r: r.key)
    return AnnotatedCorpus(tuple(requests), tuple(amb), tuple(inc))


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0]) if argv else OUT
    corpus = build()
    stats = corpus_stats(corpus)
    for kind, (n_req, n_inst) in COUNTS.items():
        assert stats.requests_per_defect[kind] == n_req, kind
        assert stats.instances_per_defect[kind] == n_inst, kind
    assert stats.requests_per_defect[DefectKind.INCOMPLETENESS] == N_INCOMPLETE
    assert stats.requests_without_annotations == N_CLEAN
    out.parent.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, out)
    print(stats.as_table())


if __name__ == "__main__":
    main()
